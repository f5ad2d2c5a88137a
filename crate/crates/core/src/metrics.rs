//! Separation quality: preserved-signal ratio, mask signal-to-interference
//! ratio, similarity coefficient and permutation alignment.

use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::masking::BinaryMask;
use crate::signals::TimeSignal;
use crate::tfr::Spectrogram;

/// Largest source count accepted by the exhaustive permutation search.
pub const MAX_ALIGN: usize = 8;
/// Stand-in for an infinite ratio on plots.
pub const PLOT_CAP: f64 = 1e12;

fn check_shape(mask: &BinaryMask, s: &Spectrogram, name: &'static str) -> Result<()> {
    if mask.shape() != s.shape() {
        return Err(Error::param(
            name,
            format!("shape {:?} does not match mask {:?}", s.shape(), mask.shape()),
        ));
    }
    Ok(())
}

fn masked_energy(mask: &BinaryMask, s: &Spectrogram) -> f64 {
    s.bins()
        .iter()
        .zip(mask.cells().iter())
        .filter(|(_, &m)| m == 1)
        .map(|(c, _)| c.norm_sqr())
        .sum()
}

/// `|M X_k|^2 / |X_k|^2`.
pub fn psr(mask: &BinaryMask, target: &Spectrogram) -> Result<f64> {
    check_shape(mask, target, "target")?;
    let total = target.energy();
    if !(total > 0.0) {
        return Err(Error::UndefinedMetric {
            metric: "psr",
            reason: "reference spectrogram is silent".into(),
        });
    }
    Ok(masked_energy(mask, target) / total)
}

/// `|M X_k|^2 / |M V_k|^2`; infinite when the mask removes all interference.
pub fn sir_mask(mask: &BinaryMask, target: &Spectrogram, interference: &Spectrogram) -> Result<f64> {
    check_shape(mask, target, "target")?;
    check_shape(mask, interference, "interference")?;
    let den = masked_energy(mask, interference);
    let num = masked_energy(mask, target);
    Ok(if den > 0.0 { num / den } else { f64::INFINITY })
}

/// `10 log10(|X_k|^2 / |V_k|^2)` in dB.
pub fn input_sir_db(target: &Spectrogram, interference: &Spectrogram) -> Result<f64> {
    if !target.same_layout(interference) {
        return Err(Error::param("interference", "layout differs from target"));
    }
    Ok(10.0 * (target.energy() / interference.energy()).log10())
}

/// `|<y, x>| / sqrt(|y|^2 |x|^2)`.
pub fn similarity(y: &TimeSignal, x: &TimeSignal) -> Result<f64> {
    if y.len() != x.len() {
        return Err(Error::param(
            "signals",
            format!("lengths differ: {} vs {}", y.len(), x.len()),
        ));
    }
    let (ey, ex) = (y.energy(), x.energy());
    if !(ey > 0.0 && ex > 0.0) {
        return Err(Error::UndefinedMetric {
            metric: "similarity",
            reason: "silent operand".into(),
        });
    }
    let dot: f64 = y.samples().iter().zip(x.samples()).map(|(a, b)| a * b).sum();
    Ok((dot.abs() / (ey * ex).sqrt()).min(1.0))
}

/// `xi[i][j] = similarity(estimate_i, reference_j)`, estimates trimmed or
/// zero-padded to each reference length. Silent estimates score 0.
pub fn similarity_matrix(estimates: &[TimeSignal], references: &[TimeSignal]) -> Result<Array2<f64>> {
    let mut xi = Array2::zeros((estimates.len(), references.len()));
    for (i, y) in estimates.iter().enumerate() {
        for (j, x) in references.iter().enumerate() {
            let y = y.resized(x.len());
            xi[[i, j]] = match similarity(&y, x) {
                Ok(v) => v,
                Err(Error::UndefinedMetric { .. }) if y.energy() == 0.0 && x.energy() > 0.0 => 0.0,
                Err(e) => return Err(e),
            };
        }
    }
    Ok(xi)
}

/// For an `n_est x m` score matrix with `n_est >= m`, the injective map from
/// references to estimates maximizing the total score; `out[j]` is the
/// estimate paired with reference `j`. The first maximum found in
/// lexicographic order wins.
pub fn best_assignment(scores: &Array2<f64>) -> Result<Vec<usize>> {
    let (n, m) = scores.dim();
    if m > n {
        return Err(Error::param("estimates", format!("{n} estimates for {m} references")));
    }
    if n > MAX_ALIGN {
        return Err(Error::param("estimates", format!("{n} exceeds the alignment limit {MAX_ALIGN}")));
    }
    let mut best = (f64::NEG_INFINITY, Vec::new());
    let mut current = Vec::with_capacity(m);
    let mut used = vec![false; n];
    fn search(
        scores: &Array2<f64>,
        current: &mut Vec<usize>,
        used: &mut [bool],
        total: f64,
        best: &mut (f64, Vec<usize>),
    ) {
        let j = current.len();
        if j == scores.ncols() {
            if total > best.0 {
                *best = (total, current.clone());
            }
            return;
        }
        for i in 0..scores.nrows() {
            if !used[i] {
                used[i] = true;
                current.push(i);
                search(scores, current, used, total + scores[[i, j]], best);
                current.pop();
                used[i] = false;
            }
        }
    }
    search(scores, &mut current, &mut used, 0.0, &mut best);
    Ok(best.1)
}

pub(crate) mod inf_as_str {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_str(&super::fmt_ratio(*v))
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Str(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Str(s) => s.parse::<f64>().map_err(serde::de::Error::custom),
        }
    }
}

/// Finite values in shortest round-trip form, infinities as `inf`/`-inf`.
pub fn fmt_ratio(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".into()
    } else if v == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{v}")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceMetrics {
    /// Reference index.
    pub source: usize,
    /// Estimate paired with this reference.
    pub estimate: usize,
    pub psr: f64,
    #[serde(with = "inf_as_str")]
    pub sir_m: f64,
    #[serde(with = "inf_as_str")]
    pub sir_in_db: f64,
    #[serde(with = "inf_as_str")]
    pub sir_out_db: f64,
    #[serde(with = "inf_as_str")]
    pub sir_gain_db: f64,
    pub xi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparationReport {
    pub sources: Vec<SourceMetrics>,
    /// Rows are estimates, columns references.
    pub xi_matrix: Vec<Vec<f64>>,
    /// `permutation[j]` is the estimate paired with reference `j`.
    pub permutation: Vec<usize>,
    pub mean_psr: f64,
    #[serde(with = "inf_as_str")]
    pub mean_sir_m: f64,
    pub mean_xi: f64,
}

impl SeparationReport {
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("source,psr,sir_m,sir_in_db,sir_out_db,sir_gain_db,xi\n");
        for s in &self.sources {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                s.source,
                s.psr,
                fmt_ratio(s.sir_m),
                fmt_ratio(s.sir_in_db),
                fmt_ratio(s.sir_out_db),
                fmt_ratio(s.sir_gain_db),
                s.xi
            ));
        }
        out
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    sum / n as f64
}

/// Pairs estimates with references by maximal total similarity and scores
/// each pair. `targets[j]` is reference `j` as seen in the analysed mixture
/// spectrogram `mixture`; its interference is `mixture - targets[j]`.
/// `masks[i]` produced estimate `i`.
pub fn align_and_report(
    estimates: &[TimeSignal],
    references: &[TimeSignal],
    masks: &[BinaryMask],
    targets: &[Spectrogram],
    mixture: &Spectrogram,
) -> Result<SeparationReport> {
    let m = references.len();
    if estimates.len() != m || masks.len() != m || targets.len() != m {
        return Err(Error::param(
            "estimates",
            format!(
                "{} estimates, {} masks, {} target spectrograms for {m} references",
                estimates.len(),
                masks.len(),
                targets.len()
            ),
        ));
    }
    if m == 0 {
        return Err(Error::param("references", "at least one reference is required"));
    }
    let xi = similarity_matrix(estimates, references)?;
    let permutation = best_assignment(&xi)?;
    let mut sources = Vec::with_capacity(m);
    for (j, &i) in permutation.iter().enumerate() {
        let target = &targets[j];
        if !target.same_layout(mixture) {
            return Err(Error::param("targets", "layout differs from mixture"));
        }
        let interference = mixture.with_bins(mixture.bins() - target.bins())?;
        let psr_v = psr(&masks[i], target)?;
        let sir_m = sir_mask(&masks[i], target, &interference)?;
        let sir_in_db = input_sir_db(target, &interference)?;
        let sir_out_db = 10.0 * sir_m.log10();
        sources.push(SourceMetrics {
            source: j,
            estimate: i,
            psr: psr_v,
            sir_m,
            sir_in_db,
            sir_out_db,
            sir_gain_db: sir_out_db - sir_in_db,
            xi: xi[[i, j]],
        });
    }
    Ok(SeparationReport {
        mean_psr: mean(sources.iter().map(|s| s.psr)),
        mean_sir_m: mean(sources.iter().map(|s| s.sir_m)),
        mean_xi: mean(sources.iter().map(|s| s.xi)),
        xi_matrix: xi.rows().into_iter().map(|r| r.to_vec()).collect(),
        permutation,
        sources,
    })
}
