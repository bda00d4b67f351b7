//! PCA initialization of the geometry decoder's final layer.
//!
//! The top-k principal components of the vertex-delta training matrix
//! become the rows of the 150→1404 layer and the mean delta becomes its
//! bias, so the decoder starts inside the data subspace. Components are
//! computed through the Gram matrix (samples × samples), which is cheap
//! for desk-scale corpora.

use ndarray::{Array1, Array2, Axis};

#[derive(Debug, Clone)]
pub struct PcaInit {
    /// `(k_eff, d)` orthonormal component rows, strongest first.
    pub components: Array2<f64>,
    pub mean: Array1<f64>,
    pub eigenvalues: Vec<f64>,
    /// True when k was reduced (fewer samples or rank than requested).
    pub reduced: bool,
}

/// Principal components of an `(n, d)` delta matrix.
pub fn pca_init(deltas: &Array2<f64>, k: usize) -> PcaInit {
    let (n, d) = deltas.dim();
    assert!(n > 0 && d > 0, "empty delta matrix");
    let mean = deltas.mean_axis(Axis(0)).unwrap();
    let centered = deltas - &mean.view().insert_axis(Axis(0));

    // Gram trick: eigenvectors of X·Xᵀ (n×n) lift to components of Xᵀ·X.
    let gram = centered.dot(&centered.t());
    let gram_na = nalgebra::DMatrix::from_fn(n, n, |r, c| gram[[r, c]]);
    let eig = gram_na.symmetric_eigen();

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());
    let lambda_max = eig.eigenvalues[order[0]].max(0.0);

    let k_req = k.min(n);
    let mut components = Vec::new();
    let mut eigenvalues = Vec::new();
    for &idx in order.iter().take(k_req) {
        let lambda = eig.eigenvalues[idx];
        if lambda <= 1e-12 * lambda_max.max(1e-300) {
            break;
        }
        let u = eig.eigenvectors.column(idx);
        // component = Xᵀ u / ‖Xᵀ u‖  (norm is √λ).
        let mut comp = vec![0.0f64; d];
        for (row, &uv) in centered.rows().into_iter().zip(u.iter()) {
            for (c, r) in comp.iter_mut().zip(row.iter()) {
                *c += uv * r;
            }
        }
        let norm = comp.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm < 1e-12 {
            break;
        }
        for c in &mut comp {
            *c /= norm;
        }
        components.push(comp);
        eigenvalues.push(lambda / n as f64);
    }

    let k_eff = components.len();
    let mut mat = Array2::<f64>::zeros((k_eff, d));
    for (i, comp) in components.iter().enumerate() {
        for (j, &v) in comp.iter().enumerate() {
            mat[[i, j]] = v;
        }
    }
    PcaInit { components: mat, mean, eigenvalues, reduced: k_eff < k }
}

/// Reconstruction of `deltas` in the span of the top components plus mean.
pub fn reconstruct(pca: &PcaInit, deltas: &Array2<f64>, k: usize) -> Array2<f64> {
    let k = k.min(pca.components.nrows());
    let comps = pca.components.slice(ndarray::s![..k, ..]);
    let centered = deltas - &pca.mean.view().insert_axis(Axis(0));
    let coords = centered.dot(&comps.t());
    coords.dot(&comps) + &pca.mean.view().insert_axis(Axis(0))
}
