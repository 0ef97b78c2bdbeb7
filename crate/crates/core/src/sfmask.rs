//! Structure-frequency attention mask.
//!
//! The eigenvalues of the normalized Laplacian give a structural matrix
//! `S[i,j] = λ_i + λ_j`. Splitting node features into a low band (`λ ≤ 1`)
//! and a high band (`λ > 1`) gives per-node energies, which form the filter
//! `F[i,j] = (e_low[i] + e_high[j]) / E`. The mask fed to attention is
//! `M = ReLU(S ⊙ F)`.
//!
//! Spectral index `k` (ascending eigenvalue order) is aligned with node row
//! `k` in `S`; `M` is therefore not covariant under node relabeling, while the
//! band features and energies are.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2, Axis, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::spectral::{self, SpectralDecomposition};

/// Below this total energy the filter falls back to all-ones.
pub const ENERGY_EPS: f64 = 1e-12;
/// Eigenvalue threshold separating the bands; `λ == 1` is low.
pub const BAND_THRESHOLD: f64 = 1.0;

/// Which mask enters the attention scores.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MaskMode {
    /// `ReLU(S ⊙ F)`.
    Full,
    /// `ReLU(S)`, i.e. no frequency filter.
    StructureOnly,
    /// All-ones, plain attention.
    None,
}

impl MaskMode {
    pub const ALL: [MaskMode; 3] = [MaskMode::Full, MaskMode::StructureOnly, MaskMode::None];

    pub fn as_str(self) -> &'static str {
        match self {
            MaskMode::Full => "full",
            MaskMode::StructureOnly => "structure-only",
            MaskMode::None => "none",
        }
    }
}

impl fmt::Display for MaskMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MaskMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MaskMode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| {
                Error::InvalidConfig(format!(
                    "unknown mask mode {s:?} (expected full, structure-only or none)"
                ))
            })
    }
}

/// Complementary 0/1 band indicators over the spectrum.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyMasks {
    pub low: Array1<f64>,
    pub high: Array1<f64>,
}

/// Per-node band energies and their total.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyProfile {
    pub low: Array1<f64>,
    pub high: Array1<f64>,
    pub total: f64,
}

/// The three matrices behind the attention mask.
#[derive(Debug, Clone, PartialEq)]
pub struct StructureFrequencyMask {
    pub structure: Array2<f64>,
    pub filter: Array2<f64>,
    pub mask: Array2<f64>,
}

pub fn frequency_masks(eigenvalues: &Array1<f64>) -> FrequencyMasks {
    let low = eigenvalues.mapv(|l| if l <= BAND_THRESHOLD { 1.0 } else { 0.0 });
    let high = low.mapv(|m| 1.0 - m);
    FrequencyMasks { low, high }
}

/// `S[i,j] = λ_i + λ_j`.
pub fn structural_matrix(eigenvalues: &Array1<f64>) -> Array2<f64> {
    let n = eigenvalues.len();
    Array2::from_shape_fn((n, n), |(i, j)| eigenvalues[i] + eigenvalues[j])
}

/// Row `i` is all ones when `λ_i ≤ 1`, all zeros otherwise. Diagnostic only;
/// [`build_mask`] uses [`structural_matrix`].
pub fn binary_eigenvalue_mask(eigenvalues: &Array1<f64>) -> Array2<f64> {
    let n = eigenvalues.len();
    Array2::from_shape_fn((n, n), |(i, _)| {
        if eigenvalues[i] <= BAND_THRESHOLD {
            1.0
        } else {
            0.0
        }
    })
}

/// Low- and high-band reconstructions `U((UᵀX) ⊙ m)`.
pub fn band_features(
    dec: &SpectralDecomposition,
    x: &Array2<f64>,
    masks: &FrequencyMasks,
) -> Result<(Array2<f64>, Array2<f64>)> {
    if masks.low.len() != dec.len() || masks.high.len() != dec.len() {
        return Err(Error::shape(
            "frequency mask length",
            dec.len(),
            masks.low.len(),
        ));
    }
    let x_hat = dec.gft(x)?;
    let band = |m: &Array1<f64>| {
        let mut h = x_hat.clone();
        for (mut row, &keep) in h.axis_iter_mut(Axis(0)).zip(m) {
            row *= keep;
        }
        dec.igft(&h)
    };
    Ok((band(&masks.low)?, band(&masks.high)?))
}

/// Row-wise squared norms of both bands and their grand total.
pub fn energy_profile(x_low: &Array2<f64>, x_high: &Array2<f64>) -> Result<EnergyProfile> {
    if x_low.dim() != x_high.dim() {
        return Err(Error::shape("band shapes", x_low.dim(), x_high.dim()));
    }
    let row_energy = |x: &Array2<f64>| x.map_axis(Axis(1), |r| r.iter().map(|v| v * v).sum());
    let low: Array1<f64> = row_energy(x_low);
    let high: Array1<f64> = row_energy(x_high);
    let total = low.sum() + high.sum();
    if !total.is_finite() {
        return Err(Error::NonFinite("frequency energy"));
    }
    Ok(EnergyProfile { low, high, total })
}

/// `F[i,j] = (e_low[i] + e_high[j]) / E`, or all ones when `E ≤ 1e-12`.
pub fn filter_matrix(ep: &EnergyProfile) -> Array2<f64> {
    let n = ep.low.len();
    if ep.total <= ENERGY_EPS {
        return Array2::ones((n, n));
    }
    Array2::from_shape_fn((n, n), |(i, j)| (ep.low[i] + ep.high[j]) / ep.total)
}

/// `M = max(0, S ⊙ F)`.
pub fn refine_mask(s: &Array2<f64>, f: &Array2<f64>) -> Result<Array2<f64>> {
    if s.dim() != f.dim() {
        return Err(Error::shape("refine_mask operands", s.dim(), f.dim()));
    }
    Ok(Zip::from(s).and(f).map_collect(|&a, &b| (a * b).max(0.0)))
}

/// Intermediate products of the mask pipeline for one graph.
#[derive(Debug, Clone)]
pub struct MaskComponents {
    pub decomposition: SpectralDecomposition,
    pub bands: Option<(Array2<f64>, Array2<f64>)>,
    pub energy: Option<EnergyProfile>,
    pub matrices: StructureFrequencyMask,
}

/// Runs the pipeline from a precomputed decomposition. `x` is required for
/// [`MaskMode::Full`]. For the reduced modes the effective `S` and `F` are
/// reported: structure-only uses `F = 1`, none uses `S = F = 1`.
pub fn components_from(
    dec: SpectralDecomposition,
    x: Option<&Array2<f64>>,
    mode: MaskMode,
) -> Result<MaskComponents> {
    let n = dec.len();
    let (bands, energy, matrices) = match mode {
        MaskMode::None => {
            let ones = Array2::ones((n, n));
            let m = StructureFrequencyMask {
                structure: ones.clone(),
                filter: ones.clone(),
                mask: ones,
            };
            (None, None, m)
        }
        MaskMode::StructureOnly => {
            let s = structural_matrix(dec.eigenvalues());
            let f = Array2::ones((n, n));
            let m = refine_mask(&s, &f)?;
            (
                None,
                None,
                StructureFrequencyMask {
                    structure: s,
                    filter: f,
                    mask: m,
                },
            )
        }
        MaskMode::Full => {
            let x =
                x.ok_or_else(|| Error::InvalidConfig("full mask mode needs node features".into()))?;
            let masks = frequency_masks(dec.eigenvalues());
            let (low, high) = band_features(&dec, x, &masks)?;
            let ep = energy_profile(&low, &high)?;
            let s = structural_matrix(dec.eigenvalues());
            let f = filter_matrix(&ep);
            let m = refine_mask(&s, &f)?;
            if m.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("structure-frequency mask"));
            }
            (
                Some((low, high)),
                Some(ep),
                StructureFrequencyMask {
                    structure: s,
                    filter: f,
                    mask: m,
                },
            )
        }
    };
    Ok(MaskComponents {
        decomposition: dec,
        bands,
        energy,
        matrices,
    })
}

/// Decomposes `g` and runs the pipeline, falling back to the graph's own
/// features when `x` is `None`.
pub fn build_components(
    g: &Graph,
    x: Option<&Array2<f64>>,
    mode: MaskMode,
) -> Result<MaskComponents> {
    let x = x.or(g.features());
    if let Some(x) = x {
        if x.nrows() != g.node_count() {
            return Err(Error::shape("feature rows", g.node_count(), x.nrows()));
        }
    }
    components_from(spectral::decompose(g)?, x, mode)
}

/// The attention mask for `g` under `mode`.
pub fn build_mask(g: &Graph, x: Option<&Array2<f64>>, mode: MaskMode) -> Result<Array2<f64>> {
    if mode == MaskMode::None {
        let n = g.node_count();
        return Ok(Array2::ones((n, n)));
    }
    Ok(build_components(g, x, mode)?.matrices.mask)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn k2_with_impulse() -> Graph {
        Graph::new(2, [(0, 1)], Some(array![[1.0], [0.0]])).unwrap()
    }

    fn assert_close(a: &Array2<f64>, b: &Array2<f64>, tol: f64) {
        assert_eq!(a.dim(), b.dim());
        let err = spectral::max_abs_diff(a, b);
        assert!(err <= tol, "max diff {err:e}\n{a}\n{b}");
    }

    #[test]
    fn mask_mode_names_round_trip() {
        for m in MaskMode::ALL {
            assert_eq!(m.as_str().parse::<MaskMode>().unwrap(), m);
        }
        assert!("partial".parse::<MaskMode>().is_err());
    }

    #[test]
    fn band_split_threshold_is_inclusive() {
        let m = frequency_masks(&array![0.0, 2.0]);
        assert_eq!(m.low, array![1.0, 0.0]);
        assert_eq!(m.high, array![0.0, 1.0]);
        assert_eq!(
            frequency_masks(&array![1.0, 1.0, 1.0]).low,
            array![1.0, 1.0, 1.0]
        );
        assert_eq!(
            frequency_masks(&array![0.0, 1.0, 2.0]).low,
            array![1.0, 1.0, 0.0]
        );
    }

    #[test]
    fn structure_matrix_examples() {
        assert_eq!(
            structural_matrix(&array![0.0, 2.0]),
            array![[0.0, 2.0], [2.0, 4.0]]
        );
        assert_eq!(
            structural_matrix(&Array1::zeros(3)),
            Array2::<f64>::zeros((3, 3))
        );
        let s = structural_matrix(&array![0.1, 0.7, 1.9]);
        assert_eq!(s, s.t());
    }

    #[test]
    fn binary_mask_rows() {
        assert_eq!(
            binary_eigenvalue_mask(&array![0.0, 2.0]),
            array![[1.0, 1.0], [0.0, 0.0]]
        );
        assert_eq!(
            binary_eigenvalue_mask(&array![0.5, 1.0]),
            Array2::<f64>::ones((2, 2))
        );
        assert_eq!(
            binary_eigenvalue_mask(&array![1.5, 2.0]),
            Array2::<f64>::zeros((2, 2))
        );
    }

    #[test]
    fn k2_chain() {
        let g = k2_with_impulse();
        let c = build_components(&g, None, MaskMode::Full).unwrap();
        let (low, high) = c.bands.unwrap();
        assert_close(&low, &array![[0.5], [0.5]], 1e-12);
        assert_close(&high, &array![[0.5], [-0.5]], 1e-12);
        let ep = c.energy.unwrap();
        assert!((ep.total - 1.0).abs() < 1e-12);
        for e in ep.low.iter().chain(&ep.high) {
            assert!((e - 0.25).abs() < 1e-12);
        }
        assert_close(&c.matrices.filter, &array![[0.5, 0.5], [0.5, 0.5]], 1e-12);
        assert_close(&c.matrices.structure, &array![[0.0, 2.0], [2.0, 4.0]], 0.0);
        assert_close(&c.matrices.mask, &array![[0.0, 1.0], [1.0, 2.0]], 1e-12);
    }

    #[test]
    fn full_pass_band() {
        let g = Graph::new(3, [(0, 1), (1, 2)], None).unwrap();
        let dec = spectral::decompose(&g).unwrap();
        let x = array![[1.0, 2.0], [3.0, -1.0], [0.0, 4.0]];
        let all = FrequencyMasks {
            low: Array1::ones(3),
            high: Array1::zeros(3),
        };
        let (low, high) = band_features(&dec, &x, &all).unwrap();
        assert_close(&low, &x, 1e-12);
        assert_close(&high, &Array2::zeros((3, 2)), 1e-12);
        let zero = Array2::zeros((3, 2));
        let (low, high) = band_features(&dec, &zero, &frequency_masks(dec.eigenvalues())).unwrap();
        assert_eq!(low, zero);
        assert_eq!(high, zero);
    }

    #[test]
    fn low_band_equals_indicator_filter() {
        let g = Graph::new(4, [(0, 1), (1, 2), (2, 3), (3, 0), (0, 2)], None).unwrap();
        let dec = spectral::decompose(&g).unwrap();
        let x = array![[1.0], [-2.0], [0.5], [3.0]];
        let masks = frequency_masks(dec.eigenvalues());
        let (low, _) = band_features(&dec, &x, &masks).unwrap();
        assert_close(&low, &dec.filter(&masks.low, &x).unwrap(), 1e-12);
    }

    #[test]
    fn zero_energy_falls_back_to_ones() {
        let z = Array2::zeros((3, 2));
        let ep = energy_profile(&z, &z).unwrap();
        assert_eq!(ep.total, 0.0);
        assert_eq!(filter_matrix(&ep), Array2::<f64>::ones((3, 3)));
    }

    #[test]
    fn energy_shape_mismatch() {
        assert!(energy_profile(&Array2::zeros((2, 1)), &Array2::zeros((3, 1))).is_err());
        assert!(refine_mask(&Array2::zeros((2, 2)), &Array2::zeros((2, 3))).is_err());
    }

    #[test]
    fn relu_clips_and_zero_filter() {
        let s = array![[1.0, -2.0], [3.0, 0.0]];
        let m = refine_mask(&s, &Array2::ones((2, 2))).unwrap();
        assert_eq!(m, array![[1.0, 0.0], [3.0, 0.0]]);
        assert_eq!(
            refine_mask(&s, &Array2::zeros((2, 2))).unwrap(),
            Array2::<f64>::zeros((2, 2))
        );
    }

    #[test]
    fn build_mask_modes_on_k2() {
        let g = k2_with_impulse();
        assert_eq!(
            build_mask(&g, None, MaskMode::None).unwrap(),
            Array2::<f64>::ones((2, 2))
        );
        assert_eq!(
            build_mask(&g, None, MaskMode::StructureOnly).unwrap(),
            array![[0.0, 2.0], [2.0, 4.0]]
        );
        assert_close(
            &build_mask(&g, None, MaskMode::Full).unwrap(),
            &array![[0.0, 1.0], [1.0, 2.0]],
            1e-12,
        );
    }

    #[test]
    fn full_mode_requires_features() {
        let g = Graph::new(2, [(0, 1)], None).unwrap();
        assert!(matches!(
            build_mask(&g, None, MaskMode::Full),
            Err(Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn overflowing_features_are_a_numerical_failure() {
        let g = Graph::new(2, [(0, 1)], Some(array![[1e200], [0.0]])).unwrap();
        let err = build_mask(&g, None, MaskMode::Full).unwrap_err();
        assert!(err.is_numerical(), "{err}");
    }
}
