fn main() {
    std::process::exit(audioface::cli::run(std::env::args_os()));
}
