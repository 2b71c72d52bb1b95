use serde::{Deserialize, Serialize};

use super::{Channel, CovMatrix2, JointPmf, Pmf};
use crate::error::{Error, Result};

fn disjoint(a: &[(usize, usize)], b: &[(usize, usize)]) -> Result<()> {
    if a.iter().any(|(i, _)| b.iter().any(|(j, _)| i == j)) {
        return Err(Error::InvalidArgument("point sets share an axis".into()));
    }
    Ok(())
}

/// `log2 1/p(x|y)` in bits; `+inf` when `p(x|y) = 0`. An empty `y` gives the
/// unconditional self-information.
pub fn conditional_information(
    joint: &JointPmf,
    x: &[(&str, usize)],
    y: &[(&str, usize)],
) -> Result<f64> {
    let xs = joint.resolve_point(x)?;
    let ys = joint.resolve_point(y)?;
    disjoint(&xs, &ys)?;
    let py = joint.mass_where(&ys);
    if py <= 0.0 {
        return Err(Error::ZeroProbabilityCondition);
    }
    let both: Vec<(usize, usize)> = xs.iter().chain(&ys).copied().collect();
    let pxy = joint.mass_where(&both);
    if pxy <= 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok((py / pxy).log2())
}

/// `log2 p(x,y) / (p(x) p(y))`; `-inf` when `p(x,y) = 0`.
pub fn information_density(
    joint: &JointPmf,
    x: &[(&str, usize)],
    y: &[(&str, usize)],
) -> Result<f64> {
    let xs = joint.resolve_point(x)?;
    let ys = joint.resolve_point(y)?;
    disjoint(&xs, &ys)?;
    let px = joint.mass_where(&xs);
    let py = joint.mass_where(&ys);
    if px <= 0.0 || py <= 0.0 {
        return Err(Error::ZeroProbabilityCondition);
    }
    let both: Vec<(usize, usize)> = xs.iter().chain(&ys).copied().collect();
    let pxy = joint.mass_where(&both);
    if pxy <= 0.0 {
        return Ok(f64::NEG_INFINITY);
    }
    Ok((pxy / (px * py)).log2())
}

fn table_entropy(probs: &[f64]) -> f64 {
    probs
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| -p * p.log2())
        .sum()
}

/// Conditional Shannon entropy `H(target | given)` in bits.
pub fn entropy(joint: &JointPmf, target: &[&str], given: &[&str]) -> Result<f64> {
    if target.iter().any(|t| given.contains(t)) {
        return Err(Error::InvalidArgument(
            "target and given axes overlap".into(),
        ));
    }
    let mut all: Vec<&str> = given.to_vec();
    all.extend_from_slice(target);
    let h_all = table_entropy(joint.marginalize(&all)?.probs());
    let h_given = if given.is_empty() {
        0.0
    } else {
        table_entropy(joint.marginalize(given)?.probs())
    };
    Ok((h_all - h_given).max(0.0))
}

/// `I(a; b) = H(a) - H(a | b)`.
pub fn mutual_information(joint: &JointPmf, a: &[&str], b: &[&str]) -> Result<f64> {
    Ok((entropy(joint, a, &[])? - entropy(joint, a, b)?).max(0.0))
}

/// Half the l1 distance between two pmfs on identical axes.
pub fn total_variation(p: &JointPmf, q: &JointPmf) -> Result<f64> {
    if p.axes() != q.axes() {
        return Err(Error::AxisMismatch);
    }
    Ok(0.5
        * p.probs()
            .iter()
            .zip(q.probs())
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>())
}

struct DensityPair {
    u: Vec<usize>,
    y: Vec<usize>,
    pu: JointPmf,
    py: JointPmf,
    puy: JointPmf,
}

impl DensityPair {
    fn eval(&self, point: &[usize], scratch: &mut Vec<usize>) -> f64 {
        scratch.clear();
        scratch.extend(self.u.iter().map(|&i| point[i]));
        let pu = self.pu.prob(scratch);
        let split = scratch.len();
        scratch.extend(self.y.iter().map(|&i| point[i]));
        let puy = self.puy.prob(scratch);
        let py = self.py.prob(&scratch[split..]);
        (puy / (pu * py)).log2()
    }
}

/// `E_C Cov[(i(U_k; Y_k))_k | C]` for the listed `(U_k, Y_k)` axis groups,
/// where `C` is the axis set `cond`. Returns a `k x k` matrix in bits^2.
pub fn density_covariance(
    joint: &JointPmf,
    pairs: &[(&[&str], &[&str])],
    cond: &[&str],
) -> Result<Vec<Vec<f64>>> {
    let dens: Vec<DensityPair> = pairs
        .iter()
        .map(|(u, y)| {
            let ui = joint.axis_indices(u)?;
            let yi = joint.axis_indices(y)?;
            let mut uy = ui.clone();
            uy.extend(&yi);
            Ok(DensityPair {
                pu: joint.marginal_by_index(&ui),
                py: joint.marginal_by_index(&yi),
                puy: joint.marginal_by_index(&uy),
                u: ui,
                y: yi,
            })
        })
        .collect::<Result<_>>()?;
    let ci = joint.axis_indices(cond)?;
    let cond_marg = joint.marginal_by_index(&ci);
    let k = dens.len();
    let n_cond = cond_marg.len();

    let mut cpoint = vec![0usize; ci.len()];
    let mut scratch = Vec::new();
    let cond_index = |point: &[usize], cpoint: &mut Vec<usize>| {
        for (slot, &a) in cpoint.iter_mut().zip(&ci) {
            *slot = point[a];
        }
        cond_marg.flat_index(cpoint)
    };

    // first pass: conditional means
    let mut sums = vec![vec![0.0; k]; n_cond];
    let mut f = vec![0.0; k];
    joint.for_each_cell(|point, p| {
        if p <= 0.0 {
            return;
        }
        let c = cond_index(point, &mut cpoint);
        for (j, d) in dens.iter().enumerate() {
            sums[c][j] += p * d.eval(point, &mut scratch);
        }
    });
    let means: Vec<Vec<f64>> = sums
        .iter()
        .enumerate()
        .map(|(c, s)| {
            let w = cond_marg.probs()[c];
            s.iter().map(|v| if w > 0.0 { v / w } else { 0.0 }).collect()
        })
        .collect();

    // second pass: centred second moments, weighted by the full joint
    let mut cov = vec![vec![0.0; k]; k];
    joint.for_each_cell(|point, p| {
        if p <= 0.0 {
            return;
        }
        let c = cond_index(point, &mut cpoint);
        for (j, d) in dens.iter().enumerate() {
            f[j] = d.eval(point, &mut scratch) - means[c][j];
        }
        for a in 0..k {
            for b in 0..k {
                cov[a][b] += p * f[a] * f[b];
            }
        }
    });
    Ok(cov)
}

/// `E_X Var[i(X;Y) | X]` for input pmf `input` over `channel` (all outputs
/// taken jointly as `Y`).
pub fn channel_dispersion(input: &Pmf, channel: &Channel) -> Result<f64> {
    let out_names: Vec<String> = (0..channel.outputs().len())
        .map(|i| format!("__y{i}"))
        .collect();
    let out_refs: Vec<&str> = out_names.iter().map(String::as_str).collect();
    let ch = channel.with_names("__x", &out_refs)?;
    let joint = JointPmf::from_input_and_channel(input, &ch)?;
    let v = density_covariance(&joint, &[(&["__x"], &out_refs)], &["__x"])?;
    Ok(v[0][0].max(0.0))
}

/// Broadcast dispersion matrix `E_{U1U2} Cov[(i(U1;Y1), i(U2;Y2)) | U1 U2]`.
///
/// `q_u1u2x` must have exactly three axes, read positionally as
/// `(U1, U2, X)`; `channel` maps `X` to the two outputs `(Y1, Y2)`.
pub fn bc_covariance(q_u1u2x: &JointPmf, channel: &Channel) -> Result<CovMatrix2> {
    if q_u1u2x.num_axes() != 3 {
        return Err(Error::ShapeMismatch {
            expected: 3,
            found: q_u1u2x.num_axes(),
        });
    }
    if channel.outputs().len() != 2 {
        return Err(Error::ShapeMismatch {
            expected: 2,
            found: channel.outputs().len(),
        });
    }
    let joint = q_u1u2x
        .relabeled(&["U1", "U2", "X"])?
        .with_channel("X", &channel.with_names("X", &["Y1", "Y2"])?)?;
    let m = density_covariance(
        &joint,
        &[(&["U1"], &["Y1"]), (&["U2"], &["Y2"])],
        &["U1", "U2"],
    )?;
    let off = 0.5 * (m[0][1] + m[1][0]);
    CovMatrix2::new([[m[0][0].max(0.0), off], [off, m[1][1].max(0.0)]])
}

/// Which variables the wiretap variances condition on. The two coincide
/// when `U = X`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DispersionConditioning {
    /// `E_{UX} Var[i(U;Y) | U, X]`
    #[default]
    InputPair,
    /// `E_U Var[i(U;Y) | U]`
    Auxiliary,
}

/// `(V_Y, V_Z)` for a wiretap input `q_ux` (axes read as `(U, X)`) and a
/// channel with outputs `(Y, Z)`.
pub fn wiretap_variances(
    q_ux: &JointPmf,
    channel: &Channel,
    conditioning: DispersionConditioning,
) -> Result<(f64, f64)> {
    if q_ux.num_axes() != 2 {
        return Err(Error::ShapeMismatch {
            expected: 2,
            found: q_ux.num_axes(),
        });
    }
    if channel.outputs().len() != 2 {
        return Err(Error::ShapeMismatch {
            expected: 2,
            found: channel.outputs().len(),
        });
    }
    let joint = q_ux
        .relabeled(&["U", "X"])?
        .with_channel("X", &channel.with_names("X", &["Y", "Z"])?)?;
    let cond: &[&str] = match conditioning {
        DispersionConditioning::InputPair => &["U", "X"],
        DispersionConditioning::Auxiliary => &["U"],
    };
    let vy = density_covariance(&joint, &[(&["U"], &["Y"])], cond)?[0][0];
    let vz = density_covariance(&joint, &[(&["U"], &["Z"])], cond)?[0][0];
    Ok((vy.max(0.0), vz.max(0.0)))
}
