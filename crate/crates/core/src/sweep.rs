//! The standard grid of tiny random-binning instances used to check the
//! one-shot bounds against exact enumeration.

use rand::Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::binning::BinningSpec;
use crate::error::Result;
use crate::prob::{Alphabet, JointPmf, Pmf};
use crate::rng::substream;

pub const GAMMA_GRID: [f64; 5] = [0.25, 0.5, 1.0, 2.0, 4.0];

/// One source pmf with its binning spec.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepInstance {
    pub id: usize,
    pub source: JointPmf,
    pub spec: BinningSpec,
}

/// Choice of `t_Z` for the uniformity bound.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TzChoice {
    Marginal,
    Uniform,
}

pub const TZ_CHOICES: [TzChoice; 2] = [TzChoice::Marginal, TzChoice::Uniform];

/// Choice of decoding metric `t(x_V, z)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TChoice {
    /// `t = p`
    Match,
    /// `prod_v p(x_v) * p(z)`
    IidMarginals,
    Uniform,
}

pub const T_CHOICES: [TChoice; 3] = [TChoice::Match, TChoice::IidMarginals, TChoice::Uniform];

/// Random pmf with `Exp(1)` weights. When `sparse`, each entry is zeroed with
/// probability 0.3 (one entry always survives).
pub fn random_weights<R: Rng + ?Sized>(len: usize, sparse: bool, rng: &mut R) -> Vec<f64> {
    let mut w: Vec<f64> = (0..len).map(|_| rng.sample::<f64, _>(Exp1)).collect();
    if sparse {
        let keep = rng.random_range(0..len);
        for (i, v) in w.iter_mut().enumerate() {
            if i != keep && rng.random::<f64>() < 0.3 {
                *v = 0.0;
            }
        }
    }
    let s: f64 = w.iter().sum();
    w.iter().map(|v| v / s).collect()
}

fn shapes() -> Vec<(Vec<(usize, usize)>, usize)> {
    let mut out = Vec::new();
    for z in [1, 2] {
        for a in [2, 3] {
            for m in [1, 2, 3] {
                out.push((vec![(a, m)], z));
            }
        }
        for a1 in [2, 3] {
            for a2 in [2, 3] {
                for m1 in [1, 2, 3] {
                    for m2 in [1, 2, 3] {
                        out.push((vec![(a1, m1), (a2, m2)], z));
                    }
                }
            }
        }
    }
    out
}

/// `pmfs_per_shape` random sources for every shape with one or two parts,
/// alphabets of size 2 or 3, 1 to 3 bins per part and `|Z|` of 1 or 2.
/// Every fourth source is sparse.
pub fn standard_sweep(seed: u64, pmfs_per_shape: usize) -> Result<Vec<SweepInstance>> {
    let mut out = Vec::new();
    for (s, (parts, z)) in shapes().into_iter().enumerate() {
        let mut rng = substream(seed, 0x5eef, s as u64);
        let spec = BinningSpec::from_sizes(&parts)?;
        let mut names: Vec<String> = (1..=parts.len()).map(|i| format!("X{i}")).collect();
        names.push("Z".into());
        let refs: Vec<&str> = names.iter().map(String::as_str).collect();
        let mut sizes: Vec<usize> = parts.iter().map(|p| p.0).collect();
        sizes.push(z);
        let cells: usize = sizes.iter().product();
        for j in 0..pmfs_per_shape {
            let probs = random_weights(cells, j % 4 == 3, &mut rng);
            let source = JointPmf::from_sizes(&refs, &sizes, probs)?;
            out.push(SweepInstance {
                id: out.len(),
                source,
                spec: spec.clone(),
            });
        }
    }
    Ok(out)
}

/// The `t_Z` pmf for a choice.
pub fn t_z_for(inst: &SweepInstance, choice: TzChoice) -> Pmf {
    let k = inst.spec.num_parts();
    let z_axis = inst.source.axes()[k].clone();
    match choice {
        TzChoice::Marginal => Pmf::renormalized(
            z_axis,
            inst.source.marginal_by_index(&[k]).probs().to_vec(),
        ),
        TzChoice::Uniform => Pmf::uniform(z_axis),
    }
}

/// The decoding metric for a choice, on the source's axes.
pub fn t_joint_for(inst: &SweepInstance, choice: TChoice) -> Result<JointPmf> {
    let src = &inst.source;
    match choice {
        TChoice::Match => Ok(src.clone()),
        TChoice::Uniform => {
            let n = src.len();
            JointPmf::new(src.axes().to_vec(), vec![1.0 / n as f64; n])
        }
        TChoice::IidMarginals => {
            let mut acc: Option<JointPmf> = None;
            for i in 0..src.num_axes() {
                let m = src.marginal_by_index(&[i]);
                acc = Some(match acc {
                    None => m,
                    Some(a) => a.independent_product(&m)?,
                });
            }
            let prod = acc.expect("source has axes");
            let axes: Vec<Alphabet> = src.axes().to_vec();
            let total: f64 = prod.probs().iter().sum();
            JointPmf::new(axes, prod.probs().iter().map(|p| p / total).collect())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sweep_is_deterministic_and_sized() {
        let a = standard_sweep(1, 2).unwrap();
        let b = standard_sweep(1, 2).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 84 * 2);
        assert!(a.iter().all(|i| i.spec.check_source(&i.source).is_ok()));
    }

    #[test]
    fn metrics_are_pmfs() {
        for inst in standard_sweep(3, 1).unwrap() {
            for c in T_CHOICES {
                let t = t_joint_for(&inst, c).unwrap();
                assert_eq!(t.axes(), inst.source.axes());
            }
            for c in TZ_CHOICES {
                assert!((t_z_for(&inst, c).probs().iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
    }
}
