use rand::Rng;
use serde::{Deserialize, Serialize};

use super::PolyError;

/// Distribution of one noise coordinate.
#[derive(Clone, Debug, PartialEq)]
pub enum NoiseDist {
    /// Uniform on `[-1, 1]`.
    UniformSymmetric,
    /// Finite distribution given as `(value, weight)` pairs.
    DiscreteAtoms(Vec<(f64, f64)>),
}

impl NoiseDist {
    /// `E[w^k]`.
    pub fn moment(&self, k: u32) -> f64 {
        match self {
            NoiseDist::UniformSymmetric => {
                if k % 2 == 1 {
                    0.0
                } else {
                    1.0 / (k as f64 + 1.0)
                }
            }
            NoiseDist::DiscreteAtoms(atoms) => atoms.iter().map(|&(v, w)| w * v.powi(k as i32)).sum(),
        }
    }

    pub fn support(&self) -> (f64, f64) {
        match self {
            NoiseDist::UniformSymmetric => (-1.0, 1.0),
            NoiseDist::DiscreteAtoms(atoms) => atoms.iter().fold(
                (f64::INFINITY, f64::NEG_INFINITY),
                |(lo, hi), &(v, _)| (lo.min(v), hi.max(v)),
            ),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            NoiseDist::UniformSymmetric => rng.random_range(-1.0..=1.0),
            NoiseDist::DiscreteAtoms(atoms) => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for &(v, w) in atoms {
                    acc += w;
                    if u < acc {
                        return v;
                    }
                }
                atoms.last().map(|a| a.0).unwrap_or(0.0)
            }
        }
    }
}

/// Product distribution of independent noise coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseSpec {
    dists: Vec<NoiseDist>,
}

impl NoiseSpec {
    pub fn new(dists: Vec<NoiseDist>) -> Result<Self, PolyError> {
        for d in &dists {
            if let NoiseDist::DiscreteAtoms(atoms) = d {
                if atoms.is_empty() {
                    return Err(PolyError::InvalidNoise("empty atom list".into()));
                }
                if atoms.iter().any(|&(v, w)| !(w >= 0.0) || !v.is_finite()) {
                    return Err(PolyError::InvalidNoise(
                        "atom weights must be nonnegative and values finite".into(),
                    ));
                }
                let total: f64 = atoms.iter().map(|a| a.1).sum();
                if (total - 1.0).abs() > 1e-12 {
                    return Err(PolyError::InvalidNoise(format!(
                        "atom weights sum to {total}, expected 1"
                    )));
                }
            }
        }
        Ok(Self { dists })
    }

    pub fn uniform(dims: usize) -> Self {
        Self {
            dists: vec![NoiseDist::UniformSymmetric; dims],
        }
    }

    pub fn dims(&self) -> usize {
        self.dists.len()
    }

    pub fn dists(&self) -> &[NoiseDist] {
        &self.dists
    }

    pub fn moment(&self, dim: usize, k: u32) -> f64 {
        if k == 0 {
            return 1.0;
        }
        self.dists[dim].moment(k)
    }

    pub fn support_box(&self) -> Vec<(f64, f64)> {
        self.dists.iter().map(NoiseDist::support).collect()
    }

    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        for (o, d) in out.iter_mut().zip(&self.dists) {
            *o = d.sample(rng);
        }
    }

    /// Same distribution family with every sample forced to zero; used for
    /// noise-free variants of a model.
    pub fn degenerate(dims: usize) -> Self {
        Self {
            dists: vec![NoiseDist::DiscreteAtoms(vec![(0.0, 1.0)]); dims],
        }
    }
}

/// Model-file representation of the noise block.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseJson {
    UniformSymmetric,
    Atoms { atoms: AtomsJson },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AtomsJson {
    PerDim(Vec<Vec<(f64, f64)>>),
    Shared(Vec<(f64, f64)>),
}

impl NoiseJson {
    pub fn to_spec(&self, dims: usize) -> Result<NoiseSpec, PolyError> {
        match self {
            NoiseJson::UniformSymmetric => Ok(NoiseSpec::uniform(dims)),
            NoiseJson::Atoms { atoms } => {
                let per_dim = match atoms {
                    AtomsJson::PerDim(v) => {
                        if v.len() != dims {
                            return Err(PolyError::DimensionMismatch {
                                what: "atom lists",
                                expected: dims,
                                got: v.len(),
                            });
                        }
                        v.clone()
                    }
                    AtomsJson::Shared(v) => vec![v.clone(); dims],
                };
                NoiseSpec::new(per_dim.into_iter().map(NoiseDist::DiscreteAtoms).collect())
            }
        }
    }

    pub fn from_spec(spec: &NoiseSpec) -> Self {
        if spec
            .dists
            .iter()
            .all(|d| matches!(d, NoiseDist::UniformSymmetric))
        {
            return NoiseJson::UniformSymmetric;
        }
        let per_dim = spec
            .dists
            .iter()
            .map(|d| match d {
                NoiseDist::DiscreteAtoms(a) => a.clone(),
                // mixed specs are not representable; callers only export
                // homogeneous specs
                NoiseDist::UniformSymmetric => vec![(-1.0, 0.5), (1.0, 0.5)],
            })
            .collect();
        NoiseJson::Atoms {
            atoms: AtomsJson::PerDim(per_dim),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn uniform_moments() {
        let d = NoiseDist::UniformSymmetric;
        for k in 0..12u32 {
            let want = if k % 2 == 1 { 0.0 } else { 1.0 / (k as f64 + 1.0) };
            assert_eq!(d.moment(k), want);
        }
    }

    #[test]
    fn atom_weights_validated() {
        assert!(NoiseSpec::new(vec![NoiseDist::DiscreteAtoms(vec![(0.0, 0.5), (1.0, 0.4)])]).is_err());
        assert!(NoiseSpec::new(vec![NoiseDist::DiscreteAtoms(vec![(0.0, -0.5), (1.0, 1.5)])]).is_err());
        assert!(NoiseSpec::new(vec![NoiseDist::DiscreteAtoms(vec![(0.0, 0.5), (1.0, 0.5)])]).is_ok());
    }

    #[test]
    fn discrete_sampling_frequencies() {
        let d = NoiseDist::DiscreteAtoms(vec![(-1.0, 0.25), (1.0, 0.75)]);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let n = 20_000;
        let plus = (0..n).filter(|_| d.sample(&mut rng) > 0.0).count();
        let frac = plus as f64 / n as f64;
        assert!((frac - 0.75).abs() < 0.02, "{frac}");
    }

    #[test]
    fn json_forms() {
        let j: NoiseJson = serde_json::from_str(r#"{"kind":"uniform_symmetric"}"#).unwrap();
        assert_eq!(j.to_spec(2).unwrap(), NoiseSpec::uniform(2));
        let j: NoiseJson =
            serde_json::from_str(r#"{"kind":"atoms","atoms":[[[-1,0.5],[1,0.5]]]}"#).unwrap();
        let s = j.to_spec(1).unwrap();
        assert_eq!(s.moment(0, 2), 1.0);
        let j: NoiseJson = serde_json::from_str(r#"{"kind":"atoms","atoms":[[-1,0.5],[1,0.5]]}"#).unwrap();
        assert_eq!(j.to_spec(2).unwrap().dims(), 2);
    }
}
