//! Planted low-rank instances with known signatures, for benchmarks and
//! recovery tests.

use nmfk_core::{Mask, Matrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

#[derive(Debug, Clone, PartialEq)]
pub struct PlantedSpec {
    pub n: usize,
    pub m: usize,
    pub k: usize,
    /// Upper bound on pairwise cosine similarity of the planted W columns.
    pub max_similarity: f64,
    /// `‖noise‖_F / ‖W·H‖_F`.
    pub relative_noise: f64,
    /// Fraction of entries hidden from the mask.
    pub missing_fraction: f64,
}

impl PlantedSpec {
    pub fn new(n: usize, m: usize, k: usize) -> Self {
        Self {
            n,
            m,
            k,
            max_similarity: 0.5,
            relative_noise: 0.01,
            missing_fraction: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Planted {
    pub x: Matrix,
    pub mask: Mask,
    /// n × k planted signatures.
    pub w: Matrix,
    /// k × m planted mixtures.
    pub h: Matrix,
}

/// Draws a planted instance.
///
/// Each signature concentrates on its own block of attributes (weights in
/// [0.5, 1]) over a light background (weights in [0, 0.15]); columns are
/// redrawn until every pair is below `max_similarity`. Mixtures are uniform
/// on [0, 1] with 30% exact zeros. Gaussian noise scaled to the requested
/// relative magnitude is added and the result clipped at zero.
pub fn planted(spec: &PlantedSpec, seed: u64) -> Planted {
    let PlantedSpec { n, m, k, .. } = *spec;
    assert!(k >= 1 && k < n.min(m), "planted rank out of range");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let w = loop {
        let w = Matrix::from_fn(n, k, |i, c| {
            if i * k / n == c {
                rng.random_range(0.5..=1.0)
            } else {
                rng.random_range(0.0..0.15)
            }
        });
        let cols: Vec<Vec<f64>> = (0..k).map(|c| w.column(c)).collect();
        let separated = (0..k).all(|a| {
            (a + 1..k).all(|b| {
                1.0 - nmfk_core::cosine_dissimilarity(&cols[a], &cols[b]).unwrap()
                    < spec.max_similarity
            })
        });
        if separated {
            break w;
        }
    };

    let h = loop {
        let h = Matrix::from_fn(k, m, |_, _| {
            if rng.random::<f64>() < 0.3 {
                0.0
            } else {
                rng.random::<f64>()
            }
        });
        if (0..k).all(|c| h.row(c).iter().any(|&v| v > 0.0))
            && (0..m).all(|j| (0..k).any(|c| h.get(c, j) > 0.0))
        {
            break h;
        }
    };

    let clean = w.matmul(&h).expect("conforming planted factors");
    let noise: Vec<f64> = {
        let normal = Normal::new(0.0, 1.0).expect("unit normal");
        (0..n * m).map(|_| normal.sample(&mut rng)).collect()
    };
    let noise_norm = noise.iter().map(|v| v * v).sum::<f64>().sqrt();
    let scale = if noise_norm > 0.0 {
        spec.relative_noise * clean.frobenius_norm() / noise_norm
    } else {
        0.0
    };
    let x = Matrix::from_fn(n, m, |i, j| {
        (clean.get(i, j) + scale * noise[i * m + j]).max(0.0)
    });

    let mask = loop {
        let observed: Vec<bool> = (0..n * m)
            .map(|_| rng.random::<f64>() >= spec.missing_fraction)
            .collect();
        if let Ok(mask) = Mask::new(n, m, observed) {
            break mask;
        }
    };

    Planted { x, mask, w, h }
}

/// Writes a planted matrix as a location-per-row table (`id`, then one
/// column per attribute), leaving masked cells empty. Optionally includes
/// `lon`/`lat` columns from a deterministic grid.
pub fn to_table(p: &Planted, with_coordinates: bool) -> String {
    let (n, m) = p.x.shape();
    let mut out = String::from("id");
    if with_coordinates {
        out.push_str(",lon,lat");
    }
    for i in 0..n {
        out.push_str(&format!(",attr{i:02}"));
    }
    out.push('\n');
    for j in 0..m {
        out.push_str(&format!("loc{j:04}"));
        if with_coordinates {
            out.push_str(&format!(
                ",{},{}",
                -114.0 + (j % 10) as f64 * 0.1,
                38.0 + (j / 10) as f64 * 0.1
            ));
        }
        for i in 0..n {
            out.push(',');
            if p.mask.is_observed(i, j) {
                out.push_str(&format!("{:e}", p.x.get(i, j)));
            }
        }
        out.push('\n');
    }
    out
}
