//! Planted-geometry stores: synthetic embeddings with known feature
//! directions.
//!
//! Every pair contributes a positive row `x⁺` and a negated row `x⁻`:
//!
//! ```text
//! x = truth·t·u_t + negation·c·(u_a + pol·u_b) + confound·k·u_k + noise·ε
//! ```
//!
//! with `t ∈ {0,1}` the row's truth value, `pol = ±1` its polarity, `c = ±1`
//! a per-row carrier sign, `k = 1` iff the row is true and not negated, and
//! `ε ~ N(0, I)`. Polarity is carried only by the sign agreement of the
//! `u_a` and `u_b` coordinates, which per-class mean/std normalization
//! leaves intact. Directions are orthonormal and only features with nonzero
//! strength receive one.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::EmbeddingStore;
use crate::dataset::{Polarity, Statement, NEGATED_DATASET_PREFIX, NEGATED_ID_SUFFIX};
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantSpec {
    pub truth: f64,
    pub negation: f64,
    pub confound: f64,
    pub noise: f64,
    /// Topic datasets; pairs are dealt to them round-robin. Negated rows go
    /// to `Neg<name>`.
    pub datasets: Vec<String>,
}

impl Default for PlantSpec {
    fn default() -> Self {
        Self {
            truth: 0.0,
            negation: 0.0,
            confound: 0.0,
            noise: 0.1,
            datasets: vec!["Planted".into()],
        }
    }
}

impl PlantSpec {
    pub fn truth(mut self, s: f64) -> Self {
        self.truth = s;
        self
    }

    pub fn negation(mut self, s: f64) -> Self {
        self.negation = s;
        self
    }

    pub fn confound(mut self, s: f64) -> Self {
        self.confound = s;
        self
    }

    pub fn noise(mut self, sigma: f64) -> Self {
        self.noise = sigma;
        self
    }

    pub fn datasets(mut self, names: &[&str]) -> Self {
        self.datasets = names.iter().map(|s| s.to_string()).collect();
        self
    }

    pub fn n_directions(&self) -> usize {
        usize::from(self.truth != 0.0) + 2 * usize::from(self.negation != 0.0) + usize::from(self.confound != 0.0)
    }
}

/// The ground truth behind a planted store.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantPlan {
    pub spec: PlantSpec,
    pub seed: u64,
    pub dim: usize,
    pub truth_dir: Option<Vec<f64>>,
    pub negation_dirs: Option<[Vec<f64>; 2]>,
    pub confound_dir: Option<Vec<f64>>,
}

impl PlantPlan {
    pub fn directions(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::new();
        out.extend(self.truth_dir.as_deref());
        if let Some([a, b]) = &self.negation_dirs {
            out.push(a);
            out.push(b);
        }
        out.extend(self.confound_dir.as_deref());
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Planted {
    pub store: EmbeddingStore,
    pub plan: PlantPlan,
}

fn orthonormal(n: usize, dim: usize, rng: &mut impl Rng) -> Result<Vec<Vec<f64>>> {
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(n);
    while basis.len() < n {
        let mut v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        // Two Gram-Schmidt passes keep orthogonality near machine precision.
        for _ in 0..2 {
            for b in &basis {
                let d: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
                v.iter_mut().zip(b).for_each(|(x, y)| *x -= d * y);
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-6 {
            v.iter_mut().for_each(|x| *x /= norm);
            basis.push(v);
        }
    }
    Ok(basis)
}

pub fn plant_store(spec: &PlantSpec, n_pairs: usize, dim: usize, seed: u64) -> Result<Planted> {
    for (name, v) in [
        ("truth", spec.truth),
        ("negation", spec.negation),
        ("confound", spec.confound),
        ("noise", spec.noise),
    ] {
        if !v.is_finite() {
            return Err(Error::Argument(format!("{name} strength {v} is not finite")));
        }
    }
    if spec.noise < 0.0 {
        return Err(Error::Argument("noise must be non-negative".into()));
    }
    let k = spec.n_directions();
    if dim == 0 || dim < k {
        return Err(Error::Argument(format!(
            "dim {dim} cannot hold {k} orthonormal planted directions"
        )));
    }
    if n_pairs == 0 {
        return Err(Error::Argument("n_pairs must be at least 1".into()));
    }
    if spec.datasets.is_empty() {
        return Err(Error::Argument("at least one dataset name is required".into()));
    }

    let mut dirs = orthonormal(k, dim, &mut rng::stream(seed, "plant/directions"))?.into_iter();
    let truth_dir = (spec.truth != 0.0).then(|| dirs.next()).flatten();
    let negation_dirs = if spec.negation != 0.0 {
        Some([dirs.next().expect("counted"), dirs.next().expect("counted")])
    } else {
        None
    };
    let confound_dir = (spec.confound != 0.0).then(|| dirs.next()).flatten();

    // Balanced labels within each dataset.
    let n_sets = spec.datasets.len();
    let mut labels = vec![false; n_pairs];
    let mut label_rng = rng::stream(seed, "plant/labels");
    for d in 0..n_sets {
        let members: Vec<usize> = (d..n_pairs).step_by(n_sets).collect();
        let mut flags: Vec<bool> = (0..members.len()).map(|i| i < members.len() / 2).collect();
        flags.shuffle(&mut label_rng);
        for (m, f) in members.into_iter().zip(flags) {
            labels[m] = f;
        }
    }

    let mut noise_rng = rng::stream(seed, "plant/noise");
    let mut statements = Vec::with_capacity(2 * n_pairs);
    let mut matrix = Vec::with_capacity(2 * n_pairs * dim);
    for (i, &label) in labels.iter().enumerate() {
        let name = &spec.datasets[i % n_sets];
        let pos_id = format!("{name}-{i:05}");
        for polarity in [Polarity::Positive, Polarity::Negated] {
            let negated = polarity == Polarity::Negated;
            let truth = label != negated;
            let mut x: Vec<f64> = (0..dim)
                .map(|_| spec.noise * noise_rng.sample::<f64, _>(StandardNormal))
                .collect();
            if let Some(u) = &truth_dir {
                let t = if truth { spec.truth } else { 0.0 };
                x.iter_mut().zip(u).for_each(|(x, u)| *x += t * u);
            }
            if let Some([ua, ub]) = &negation_dirs {
                let carrier = if noise_rng.random::<bool>() { 1.0 } else { -1.0 };
                let pol = if negated { -1.0 } else { 1.0 };
                let (a, b) = (carrier * spec.negation, carrier * pol * spec.negation);
                for j in 0..dim {
                    x[j] += a * ua[j] + b * ub[j];
                }
            }
            if let Some(u) = &confound_dir {
                let c = if truth && !negated { spec.confound } else { 0.0 };
                x.iter_mut().zip(u).for_each(|(x, u)| *x += c * u);
            }
            matrix.extend(x.iter().map(|&v| v as f32));
            statements.push(if negated {
                Statement {
                    id: format!("{pos_id}{NEGATED_ID_SUFFIX}"),
                    text: format!("Planted item {i} of {name} does not hold."),
                    label: Some(truth),
                    dataset: format!("{NEGATED_DATASET_PREFIX}{name}"),
                    polarity,
                    pair_id: Some(pos_id.clone()),
                    chance: None,
                }
            } else {
                Statement {
                    id: pos_id.clone(),
                    text: format!("Planted item {i} of {name} holds."),
                    label: Some(truth),
                    dataset: name.clone(),
                    polarity,
                    pair_id: Some(pos_id.clone()),
                    chance: None,
                }
            });
        }
    }

    let store = EmbeddingStore::new("planted", -1, dim, statements, matrix)?;
    Ok(Planted {
        store,
        plan: PlantPlan {
            spec: spec.clone(),
            seed,
            dim,
            truth_dir,
            negation_dirs,
            confound_dir,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn directions_are_orthonormal() {
        let spec = PlantSpec::default().truth(1.0).negation(1.0).confound(1.0);
        let p = plant_store(&spec, 10, 6, 3).unwrap();
        let d = p.plan.directions();
        assert_eq!(d.len(), 4);
        for i in 0..d.len() {
            for j in 0..d.len() {
                let dot: f64 = d[i].iter().zip(d[j]).map(|(a, b)| a * b).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((dot - want).abs() < 1e-10, "<d{i}, d{j}> = {dot}");
            }
        }
    }

    #[test]
    fn dim_too_small() {
        let spec = PlantSpec::default().truth(1.0).negation(1.0);
        assert!(matches!(plant_store(&spec, 4, 2, 0), Err(Error::Argument(_))));
        assert!(plant_store(&spec, 4, 3, 0).is_ok());
    }

    #[test]
    fn noiseless_rows_match_the_generative_formula() {
        let spec = PlantSpec::default().truth(5.0).noise(0.0);
        let p = plant_store(&spec, 6, 4, 11).unwrap();
        let u = p.plan.truth_dir.as_ref().unwrap();
        for (i, s) in p.store.statements.iter().enumerate() {
            let t = if s.label == Some(true) { 5.0 } else { 0.0 };
            for (x, u) in p.store.row(i).iter().zip(u) {
                assert_eq!(*x, (t * u) as f32);
            }
        }
    }

    #[test]
    fn labels_balanced_and_pairs_complementary() {
        let spec = PlantSpec::default().datasets(&["A", "B", "C"]);
        let p = plant_store(&spec, 60, 4, 2).unwrap();
        for name in ["A", "B", "C"] {
            let rows = p.store.rows_in(&[name]);
            let trues = rows.iter().filter(|&&r| p.store.statements[r].label == Some(true)).count();
            assert_eq!(trues * 2, rows.len());
        }
        for pair in p.store.statements.chunks(2) {
            assert_eq!(pair[0].label.map(|l| !l), pair[1].label);
            assert_eq!(pair[1].dataset, format!("Neg{}", pair[0].dataset));
        }
    }

    #[test]
    fn deterministic() {
        let spec = PlantSpec::default().negation(5.0);
        assert_eq!(plant_store(&spec, 8, 5, 9).unwrap(), plant_store(&spec, 8, 5, 9).unwrap());
        assert_ne!(plant_store(&spec, 8, 5, 9).unwrap(), plant_store(&spec, 8, 5, 10).unwrap());
    }
}
