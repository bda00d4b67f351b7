//! Command-line pipeline driver.
//!
//! Subcommands cover the whole flow: `gen-synth` (synthetic corpus),
//! `normalize` (pose + lighting normalization), `train`, `infer`, `blend`,
//! `eval` and `export-mesh`. Frames are exchanged as numbered image files;
//! every run writes a manifest (config echo + input hashes) next to its
//! outputs. Exit codes: 0 success, 1 pipeline error (one machine-parsable
//! line on stderr), 2 usage errors.

use crate::audio::{self, StftParams};
use crate::config::PipelineConfig;
use crate::geom;
use crate::image::Image;
use crate::landmarks::{self, LandmarkFrame};
use crate::light::SequenceNormalizer;
use crate::manifest::RunManifest;
use crate::model::{self, Dataset, Reference, TrainOptions, TrainSample};
use crate::synthkit::{self, CorpusParams};
use crate::topology::FaceTopology;
use crate::{PipelineError, Result};
use clap::{Args, Parser, Subcommand};
use nalgebra::Point3;
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(name = "audioface", version, about = "Audio-driven 3D talking face pipeline")]
pub struct Cli {
    /// Random seed (overrides the config value).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Config file (`key = value`); defaults apply for missing keys.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Dump intermediate maps (gains, weights, alphas) next to outputs.
    #[arg(long, global = true)]
    pub diagnostics: bool,
    /// Worker threads for per-frame stages.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Generate a synthetic audio-visual corpus with ground truth.
    GenSynth(GenSynthArgs),
    /// Pose- and lighting-normalize a corpus into texture atlases.
    Normalize(NormalizeArgs),
    /// Train the joint prediction model on a normalized corpus.
    Train(TrainArgs),
    /// Run audio-driven inference with a trained model.
    Infer(InferArgs),
    /// Composite predictions into target video frames.
    Blend(BlendArgs),
    /// Compare two frame directories (SSIM, and LMD when streams exist).
    Eval(EvalArgs),
    /// Export one predicted frame as a textured OBJ mesh.
    ExportMesh(ExportMeshArgs),
}

#[derive(Args)]
pub struct GenSynthArgs {
    #[arg(long)]
    pub frames: usize,
    #[arg(long)]
    pub out: PathBuf,
    /// Add specular highlights to the rendered frames.
    #[arg(long)]
    pub specular: bool,
}

#[derive(Args)]
pub struct NormalizeArgs {
    /// Corpus directory (frames/ + landmarks.lmk).
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Reference frame index; picked automatically (most frontal) if unset.
    #[arg(long)]
    pub ref_frame: Option<usize>,
}

#[derive(Args)]
pub struct TrainArgs {
    /// Corpus directory (for audio.wav and timestamps).
    #[arg(long)]
    pub corpus: PathBuf,
    /// Normalized directory produced by `normalize`.
    #[arg(long)]
    pub normalized: PathBuf,
    /// Output directory (model.ckpt + loss_history.csv).
    #[arg(long)]
    pub out: PathBuf,
    /// Disable auto-regressive texture conditioning.
    #[arg(long)]
    pub no_ar: bool,
    /// Enable the blendshape head (fits coefficients to the mouth basis).
    #[arg(long)]
    pub blendshapes: bool,
    /// Override the configured epoch count.
    #[arg(long)]
    pub epochs: Option<usize>,
}

#[derive(Args)]
pub struct InferArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub audio: PathBuf,
    /// Normalized directory (reference atlas + reference vertices).
    #[arg(long)]
    pub normalized: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct BlendArgs {
    /// Prediction directory from `infer`.
    #[arg(long)]
    pub pred: PathBuf,
    /// Target corpus directory (frames/ + landmarks.lmk).
    #[arg(long)]
    pub target: PathBuf,
    /// Normalized directory of the trained subject (for the reference).
    #[arg(long)]
    pub normalized: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub gt: PathBuf,
    /// Report path (JSON).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct ExportMeshArgs {
    /// Prediction directory from `infer`.
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub frame: usize,
    #[arg(long)]
    pub normalized: PathBuf,
    /// Output OBJ path.
    #[arg(long)]
    pub out: PathBuf,
}

/// Entry point used by the binary; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}: {}", e.code(), e);
            1
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(threads) = cli.threads {
        cfg.threads = threads;
    }
    let _ = rayon::ThreadPoolBuilder::new().num_threads(cfg.threads).build_global();

    match cli.command {
        Command::GenSynth(args) => cmd_gen_synth(&cfg, &args, cli.diagnostics),
        Command::Normalize(args) => cmd_normalize(&cfg, &args, cli.diagnostics),
        Command::Train(args) => cmd_train(&cfg, &args),
        Command::Infer(args) => cmd_infer(&cfg, &args),
        Command::Blend(args) => cmd_blend(&cfg, &args),
        Command::Eval(args) => cmd_eval(&cfg, &args),
        Command::ExportMesh(args) => cmd_export_mesh(&cfg, &args),
    }
}

fn frame_path(dir: &Path, idx: usize) -> PathBuf {
    dir.join(format!("frame_{:06}.png", idx))
}

fn atlas_path(dir: &Path, idx: usize) -> PathBuf {
    dir.join(format!("atlas_{:06}.png", idx))
}

fn cmd_gen_synth(cfg: &PipelineConfig, args: &GenSynthArgs, diagnostics: bool) -> Result<()> {
    let mut corpus_params = CorpusParams {
        fps: cfg.video_fps,
        sample_rate: cfg.sample_rate,
        ..CorpusParams::default()
    };
    if args.specular {
        corpus_params.scene.specular_amplitude = 0.6;
    }
    let corpus = synthkit::gen_audio_visual_corpus(cfg.seed, args.frames, corpus_params);

    let frames_dir = args.out.join("frames");
    let truth_dir = args.out.join("truth");
    std::fs::create_dir_all(&frames_dir)?;
    std::fs::create_dir_all(&truth_dir)?;

    audio::write_wav_mono(&args.out.join("audio.wav"), &corpus.audio, cfg.sample_rate)?;

    let mut landmark_frames = Vec::with_capacity(args.frames);
    let mut truth_frames = Vec::with_capacity(args.frames);
    let mut opening_csv = String::from("frame,opening\n");
    for t in 0..args.frames {
        let frame = corpus.scene.render_frame(t);
        frame.image.save_png(&frame_path(&frames_dir, t))?;
        frame.truth.atlas_clean.pixels.save_png(&atlas_path(&truth_dir, t))?;
        if diagnostics {
            frame.truth.gain.save_pgm(&truth_dir.join(format!("gain_{:06}.pgm", t)), 0.5)?;
            frame.truth.alpha.save_pgm(&truth_dir.join(format!("alpha_{:06}.pgm", t)), 1.0)?;
        }
        opening_csv.push_str(&format!("{},{}\n", t, corpus.opening[t]));
        truth_frames.push(LandmarkFrame::new(
            corpus.scene.canonical_vertices(t),
            corpus.timestamps[t],
        )?);
        landmark_frames.push(frame.landmarks);
    }
    landmarks::save_stream(&args.out.join("landmarks.lmk"), &landmark_frames)?;
    landmarks::save_stream(&truth_dir.join("vertices.lmk"), &truth_frames)?;
    std::fs::write(truth_dir.join("opening.csv"), opening_csv)?;

    let mut manifest = RunManifest::new("gen-synth", cfg);
    manifest.insert("frames", args.frames);
    manifest.insert("baseline_lmd", corpus.baseline_lmd);
    manifest.insert("specular", args.specular);
    manifest.write(&args.out)
}

/// Loads a corpus directory: numbered frames plus the landmark stream.
fn load_corpus_landmarks(dir: &Path) -> Result<Vec<LandmarkFrame>> {
    let lmk = dir.join("landmarks.lmk");
    if lmk.exists() {
        landmarks::load_stream(&lmk)
    } else {
        let csv = dir.join("landmarks.csv");
        if csv.exists() {
            landmarks::load_csv(&csv)
        } else {
            Err(PipelineError::InvalidInput(format!(
                "no landmarks.lmk or landmarks.csv in {}",
                dir.display()
            )))
        }
    }
}

fn cmd_normalize(cfg: &PipelineConfig, args: &NormalizeArgs, diagnostics: bool) -> Result<()> {
    let topo = FaceTopology::default_grid();
    let frames_dir = args.corpus.join("frames");
    let lms = load_corpus_landmarks(&args.corpus)?;
    if lms.is_empty() {
        return Err(PipelineError::InvalidInput("empty corpus".into()));
    }

    let ref_index = match args.ref_frame {
        Some(idx) if idx < lms.len() => idx,
        Some(idx) => {
            return Err(PipelineError::InvalidInput(format!(
                "reference frame {} out of range ({} frames)",
                idx,
                lms.len()
            )))
        }
        None => geom::choose_reference_frame(&lms, &topo)?,
    };

    let ref_image = Image::load(&frame_path(&frames_dir, ref_index))?;
    let normalizer = SequenceNormalizer::new(&ref_image, &lms[ref_index], &topo, cfg)?;

    let atlases_dir = args.out.join("atlases");
    std::fs::create_dir_all(&atlases_dir)?;
    normalizer.reference.pixels.save_png(&args.out.join("reference.png"))?;
    landmarks::save_stream(&args.out.join("reference.lmk"), &[lms[ref_index].clone()])?;

    let mut vertex_frames = Vec::with_capacity(lms.len());
    let mut failures: Vec<(usize, String)> = Vec::new();
    for (t, lm) in lms.iter().enumerate() {
        let image = Image::load(&frame_path(&frames_dir, t))?;
        match normalizer.normalize_frame(&image, lm) {
            Ok(frame) => {
                frame.atlas.pixels.save_png(&atlas_path(&atlases_dir, t))?;
                vertex_frames.push(LandmarkFrame::new(frame.vertices, lm.timestamp)?);
                if diagnostics && t == ref_index {
                    let skin = geom::atlas_skin_mask(&normalizer.reference_uv, &topo, cfg.atlas_size);
                    let mut skin_img = crate::image::Grid::new(cfg.atlas_size, cfg.atlas_size);
                    for y in 0..cfg.atlas_size {
                        for x in 0..cfg.atlas_size {
                            skin_img.set(y, x, skin.get(y, x) as u8 as f32);
                        }
                    }
                    skin_img.save_pgm(&args.out.join("skin_mask.pgm"), 1.0)?;
                }
            }
            Err(e) => {
                eprintln!("warning: frame {} failed: {}", t, e);
                failures.push((t, e.to_string()));
                // Keep stream alignment with an identity copy of the
                // reference geometry.
                vertex_frames.push(LandmarkFrame::new(lms[ref_index].vertices.clone(), lm.timestamp)?);
            }
        }
    }
    landmarks::save_stream(&args.out.join("vertices.lmk"), &vertex_frames)?;

    let mut manifest = RunManifest::new("normalize", cfg);
    manifest.add_input(&args.corpus.join("landmarks.lmk")).ok();
    manifest.insert("frames", lms.len());
    manifest.insert("ref_index", ref_index);
    manifest.insert("failures", failures.len());
    manifest.write(&args.out)
}

/// Crops the lip region out of a full atlas image.
fn crop_image(img: &Image, topo: &FaceTopology) -> Result<Vec<f32>> {
    let r = topo.lip_crop;
    let crop = img.crop(r.x, r.y, r.w, r.h)?;
    Ok(crop.data().to_vec())
}

/// Assembles the training dataset from a corpus + normalized directory.
pub fn build_dataset(
    cfg: &PipelineConfig,
    corpus_dir: &Path,
    normalized_dir: &Path,
    with_blendshapes: bool,
) -> Result<Dataset> {
    let topo = FaceTopology::default_grid();
    let lms = load_corpus_landmarks(corpus_dir)?;
    let timestamps: Vec<f64> = lms.iter().map(|f| f.timestamp).collect();
    let (samples_raw, rate) = audio::read_wav_mono(&corpus_dir.join("audio.wav"))?;
    let samples_raw = if rate != cfg.sample_rate {
        audio::resample_linear(&samples_raw, rate, cfg.sample_rate)
    } else {
        samples_raw
    };
    let stft = StftParams {
        sample_rate: cfg.sample_rate,
        window_ms: cfg.window_ms,
        hop_ms: cfg.hop_ms,
        fft_size: cfg.fft_size,
        bins: cfg.spectrogram_bins,
        columns: cfg.spectrogram_frames,
    };
    let spectrograms = audio::build_spectrogram_sequence(&samples_raw, stft, &timestamps)?;

    let normalized_vertices = landmarks::load_stream(&normalized_dir.join("vertices.lmk"))?;
    let reference_atlas = Image::load(&normalized_dir.join("reference.png"))?;
    let ref_lm = landmarks::load_stream(&normalized_dir.join("reference.lmk"))?
        .into_iter()
        .next()
        .ok_or_else(|| PipelineError::InvalidInput("empty reference.lmk".into()))?;

    let basis = with_blendshapes.then(|| {
        let scene = crate::synthkit::SynthScene::generate(
            cfg.seed,
            crate::synthkit::SceneParams::default(),
            vec![0.0],
        );
        scene.blendshape_basis()
    });

    let atlases_dir = normalized_dir.join("atlases");
    let mut samples = Vec::with_capacity(lms.len());
    let mut prev_crop = vec![0.0f32; cfg.lip_crop_size * cfg.lip_crop_size * 3];
    for t in 0..lms.len() {
        let atlas = Image::load(&atlas_path(&atlases_dir, t))?;
        let crop = crop_image(&atlas, &topo)?;
        let vertices_flat: Vec<f64> = normalized_vertices[t]
            .vertices
            .iter()
            .flat_map(|p| [p.x, p.y, p.z])
            .collect();
        let blendshapes = match &basis {
            Some(b) => {
                Some(model::fit_blendshape_coeffs(&normalized_vertices[t].vertices, b)?)
            }
            None => None,
        };
        samples.push(TrainSample {
            spectrogram: spectrograms[t].data.clone(),
            vertices: vertices_flat,
            crop: crop.clone(),
            prev_crop: prev_crop.clone(),
            blendshapes,
        });
        prev_crop = crop;
    }

    Ok(Dataset {
        samples,
        reference_vertices: ref_lm.vertices.iter().flat_map(|p| [p.x, p.y, p.z]).collect(),
        reference_crop: crop_image(&reference_atlas, &topo)?,
        spec_bins: cfg.spectrogram_bins,
        spec_frames: cfg.spectrogram_frames,
        crop_size: cfg.lip_crop_size,
    })
}

fn cmd_train(cfg: &PipelineConfig, args: &TrainArgs) -> Result<()> {
    let dataset = build_dataset(cfg, &args.corpus, &args.normalized, args.blendshapes)?;
    let options = TrainOptions {
        ar: !args.no_ar,
        use_blendshapes: args.blendshapes,
        epochs: args.epochs,
        ..TrainOptions::default()
    };
    let (params, report) = model::train::<f32>(&dataset, cfg, &options)?;

    std::fs::create_dir_all(&args.out)?;
    model::save_checkpoint(&args.out.join("model.ckpt"), &params)?;
    let mut csv = String::from("step,loss\n");
    for (i, loss) in report.loss_history.iter().enumerate() {
        csv.push_str(&format!("{},{}\n", i, loss));
    }
    std::fs::write(args.out.join("loss_history.csv"), csv)?;

    let mut manifest = RunManifest::new("train", cfg);
    manifest.add_input(&args.corpus.join("audio.wav")).ok();
    manifest.insert("steps", report.steps);
    manifest.insert("parameter_count", report.parameter_count);
    if let Some(h) = &report.holdout {
        manifest.insert("holdout_loss", h.mean_total());
    }
    manifest.insert("ar", !args.no_ar);
    manifest.write(&args.out)
}

/// Loads the reference (vertices + lip crop) from a normalized directory.
fn load_reference(cfg: &PipelineConfig, normalized_dir: &Path) -> Result<(Reference, LandmarkFrame, Image)> {
    let topo = FaceTopology::default_grid();
    let reference_atlas = Image::load(&normalized_dir.join("reference.png"))?;
    let ref_lm = landmarks::load_stream(&normalized_dir.join("reference.lmk"))?
        .into_iter()
        .next()
        .ok_or_else(|| PipelineError::InvalidInput("empty reference.lmk".into()))?;
    let _ = cfg;
    let reference = Reference {
        vertices: ref_lm.vertices.iter().flat_map(|p| [p.x, p.y, p.z]).collect(),
        crop: crop_image(&reference_atlas, &topo)?,
    };
    Ok((reference, ref_lm, reference_atlas))
}

fn cmd_infer(cfg: &PipelineConfig, args: &InferArgs) -> Result<()> {
    let topo = FaceTopology::default_grid();
    let params = model::load_checkpoint::<f32>(&args.model)?;
    let (raw, rate) = audio::read_wav_mono(&args.audio)?;
    let raw = if rate != cfg.sample_rate {
        audio::resample_linear(&raw, rate, cfg.sample_rate)
    } else {
        raw
    };
    let n_frames = ((raw.len() as f64 / cfg.sample_rate as f64) * cfg.video_fps).floor() as usize;
    if n_frames == 0 {
        return Err(PipelineError::InvalidInput("audio too short for one frame".into()));
    }
    let timestamps: Vec<f64> = (0..n_frames).map(|i| i as f64 / cfg.video_fps).collect();
    let stft = StftParams {
        sample_rate: cfg.sample_rate,
        window_ms: cfg.window_ms,
        hop_ms: cfg.hop_ms,
        fft_size: cfg.fft_size,
        bins: cfg.spectrogram_bins,
        columns: cfg.spectrogram_frames,
    };
    let spectrograms = audio::build_spectrogram_sequence(&raw, stft, &timestamps)?;

    let (reference, ref_lm, reference_atlas) = load_reference(cfg, &args.normalized)?;
    let predictions = model::infer_sequence(&params, &spectrograms, &reference);

    let crops_dir = args.out.join("crops");
    let atlases_dir = args.out.join("atlases");
    std::fs::create_dir_all(&crops_dir)?;
    std::fs::create_dir_all(&atlases_dir)?;
    let ref_atlas_tex = crate::geom::TextureAtlas {
        pixels: reference_atlas,
        valid: crate::image::Mask::filled(cfg.atlas_size, cfg.atlas_size, true),
    };
    let mut vertex_frames = Vec::with_capacity(n_frames);
    let mut bs_csv = String::from("frame,coefficients\n");
    for (t, pred) in predictions.iter().enumerate() {
        let crop = Image::from_vec(cfg.lip_crop_size, cfg.lip_crop_size, pred.crop.clone())?;
        crop.save_png(&crops_dir.join(format!("crop_{:06}.png", t)))?;
        let full = crate::synth::compose_full_atlas(&ref_atlas_tex, &crop, &topo, cfg.lip_feather_px);
        full.pixels.save_png(&atlas_path(&atlases_dir, t))?;
        let vertices: Vec<Point3<f64>> = pred
            .vertices
            .chunks_exact(3)
            .map(|c| Point3::new(c[0], c[1], c[2]))
            .collect();
        vertex_frames.push(LandmarkFrame::new(vertices, timestamps[t])?);
        bs_csv.push_str(&format!(
            "{},{}\n",
            t,
            pred.blendshapes
                .iter()
                .map(|v| format!("{:.6}", v))
                .collect::<Vec<_>>()
                .join(";")
        ));
    }
    landmarks::save_stream(&args.out.join("vertices.lmk"), &vertex_frames)?;
    std::fs::write(args.out.join("blendshapes.csv"), bs_csv)?;
    let _ = ref_lm;

    let mut manifest = RunManifest::new("infer", cfg);
    manifest.add_input(&args.model)?;
    manifest.add_input(&args.audio)?;
    manifest.insert("frames", n_frames);
    manifest.write(&args.out)
}

fn cmd_blend(cfg: &PipelineConfig, args: &BlendArgs) -> Result<()> {
    let topo = FaceTopology::default_grid();
    let (_, ref_lm, _) = load_reference(cfg, &args.normalized)?;
    let cyl = geom::fit_reference_cylinder(&ref_lm, &topo, cfg.atlas_size)?;

    let target_lms = load_corpus_landmarks(&args.target)?;
    let pred_vertices = landmarks::load_stream(&args.pred.join("vertices.lmk"))?;
    let atlases_dir = args.pred.join("atlases");
    let frames_dir = args.target.join("frames");
    let n = target_lms.len().min(pred_vertices.len());
    if n == 0 {
        return Err(PipelineError::InvalidInput("nothing to blend".into()));
    }

    std::fs::create_dir_all(&args.out)?;
    for t in 0..n {
        let target_frame = Image::load(&frame_path(&frames_dir, t))?;
        let atlas_img = Image::load(&atlas_path(&atlases_dir, t))?;
        let atlas = crate::geom::TextureAtlas {
            pixels: atlas_img,
            valid: crate::image::Mask::filled(cfg.atlas_size, cfg.atlas_size, true),
        };
        let result = crate::synth::blend_into_frame(
            &target_frame,
            &target_lms[t],
            &pred_vertices[t].vertices,
            &atlas,
            &ref_lm,
            &cyl,
            &topo,
            cfg,
        )?;
        result.frame.save_png(&frame_path(&args.out, t))?;
    }

    let mut manifest = RunManifest::new("blend", cfg);
    manifest.insert("frames", n);
    manifest.write(&args.out)
}

fn cmd_eval(cfg: &PipelineConfig, args: &EvalArgs) -> Result<()> {
    let topo = FaceTopology::default_grid();
    let report = crate::metrics::evaluate_sequence(&args.pred, &args.gt, &topo)?;
    let json = serde_json::to_string_pretty(&report)
        .map_err(|e| PipelineError::Config(e.to_string()))?;
    if let Some(parent) = args.out.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    std::fs::write(&args.out, json)?;
    println!(
        "ssim mean {:.4} ± {:.4}{}",
        report.ssim_mean,
        report.ssim_std,
        match (report.lmd_mean, report.lmd_std) {
            (Some(m), Some(s)) => format!(", lmd mean {:.4} ± {:.4}", m, s),
            _ => String::new(),
        }
    );
    let _ = cfg;
    Ok(())
}

fn cmd_export_mesh(cfg: &PipelineConfig, args: &ExportMeshArgs) -> Result<()> {
    let topo = FaceTopology::default_grid();
    let (_, ref_lm, _) = load_reference(cfg, &args.normalized)?;
    let cyl = geom::fit_reference_cylinder(&ref_lm, &topo, cfg.atlas_size)?;
    let pred_vertices = landmarks::load_stream(&args.pred.join("vertices.lmk"))?;
    if args.frame >= pred_vertices.len() {
        return Err(PipelineError::InvalidInput(format!(
            "frame {} out of range ({} predictions)",
            args.frame,
            pred_vertices.len()
        )));
    }
    let atlas_img = Image::load(&atlas_path(&args.pred.join("atlases"), args.frame))?;
    let atlas = crate::geom::TextureAtlas {
        pixels: atlas_img,
        valid: crate::image::Mask::filled(cfg.atlas_size, cfg.atlas_size, true),
    };
    let mesh = crate::synth::build_textured_mesh(
        &pred_vertices[args.frame].vertices,
        atlas,
        &cyl,
        &topo,
    )?;
    crate::synth::export_obj(&mesh, &args.out)?;
    Ok(())
}
