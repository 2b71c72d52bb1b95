//! Second-order inner region for the two-user broadcast channel with private
//! messages (Marton coding with two auxiliaries).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::{quadrant_directions, region_boundary, GaussRegionSpec, BOUNDARY_TOL};
use crate::prob::{bc_covariance, entropy, mutual_information};
use crate::prob::{Channel, CovMatrix2, JointPmf};

use super::{check_common, LogTermPolicy};

/// Directions used by the default boundary scan.
pub const SCAN_DIRECTIONS: usize = 256;
/// Bisection tolerance for region boundaries, in bits.
pub const BOUNDARY_BITS_TOL: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct BCSetup {
    /// Axes read positionally as `(U1, U2, X)`.
    pub q_u1u2x: JointPmf,
    /// `X -> (Y1, Y2)`
    pub channel: Channel,
    pub n: u64,
    pub eps: f64,
}

impl BCSetup {
    pub fn new(q_u1u2x: JointPmf, channel: Channel, n: u64, eps: f64) -> Result<Self> {
        check_common(n, &[("eps", eps)])?;
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
        if q_u1u2x.shape()[2] != channel.input().size() {
            return Err(Error::ShapeMismatch {
                expected: channel.input().size(),
                found: q_u1u2x.shape()[2],
            });
        }
        Ok(Self {
            q_u1u2x,
            channel,
            n,
            eps,
        })
    }

    pub fn with_n(&self, n: u64) -> Result<Self> {
        Self::new(self.q_u1u2x.clone(), self.channel.clone(), n, self.eps)
    }

    pub fn with_eps(&self, eps: f64) -> Result<Self> {
        Self::new(self.q_u1u2x.clone(), self.channel.clone(), self.n, eps)
    }

    fn joint(&self) -> Result<JointPmf> {
        self.q_u1u2x
            .relabeled(&["U1", "U2", "X"])?
            .with_channel("X", &self.channel.with_names("X", &["Y1", "Y2"])?)
    }

    /// `[I(U1;Y1), I(U2;Y2), I(U1;Y1) + I(U2;Y2) - I(U1;U2)]`, the
    /// asymptotic region.
    pub fn marton_limit(&self) -> Result<[f64; 3]> {
        let j = self.joint()?;
        let i1 = mutual_information(&j, &["U1"], &["Y1"])?;
        let i2 = mutual_information(&j, &["U2"], &["Y2"])?;
        let i12 = mutual_information(&j, &["U1"], &["U2"])?;
        Ok([i1, i2, i1 + i2 - i12])
    }
}

/// Everything membership needs, in per-use bits.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BcConstants {
    pub h_u: [f64; 2],
    pub h_u12: f64,
    pub h_u_given_y: [f64; 2],
    pub cov: CovMatrix2,
    /// Approximation-side log terms for the two single caps and the sum cap.
    pub kappa_apx: [f64; 3],
    pub kappa_dec: f64,
    pub eps_dec: f64,
    pub n: u64,
}

pub fn bc_constants(setup: &BCSetup, policy: &LogTermPolicy) -> Result<BcConstants> {
    policy.validate()?;
    let j = setup.joint()?;
    let shape = setup.q_u1u2x.shape();
    let n = setup.n;
    let nf = n as f64;
    let l1 = policy.type_constant_for(shape[0])?;
    let l2 = policy.type_constant_for(shape[1])?;
    let l12 = policy.type_constant_for(shape[0] * shape[1])?;
    Ok(BcConstants {
        h_u: [entropy(&j, &["U1"], &[])?, entropy(&j, &["U2"], &[])?],
        h_u12: entropy(&j, &["U1", "U2"], &[])?,
        h_u_given_y: [entropy(&j, &["U1"], &["Y1"])?, entropy(&j, &["U2"], &["Y2"])?],
        cov: bc_covariance(&setup.q_u1u2x, &setup.channel)?,
        kappa_apx: [
            policy.apx_bits(n, l1) / nf,
            policy.apx_bits(n, l2) / nf,
            policy.apx_bits(n, l12) / nf,
        ],
        kappa_dec: policy.dec_bits(n) / nf,
        eps_dec: policy.budget(setup.eps, n)?,
        n,
    })
}

impl BcConstants {
    /// Lower-left corner of the admissible `R̃` set before the Gaussian term.
    fn offset(&self) -> [f64; 2] {
        [
            self.h_u_given_y[0] + self.kappa_dec,
            self.h_u_given_y[1] + self.kappa_dec,
        ]
    }

    /// Caps on `R̃` left over by `(R1, R2)`: `[c1, c2, sum]`.
    fn caps(&self, r1: f64, r2: f64) -> [f64; 3] {
        [
            self.h_u[0] - self.kappa_apx[0] - r1,
            self.h_u[1] - self.kappa_apx[1] - r2,
            self.h_u12 - self.kappa_apx[2] - r1 - r2,
        ]
    }

    /// The single-user bound `R_j <= H(U_j) - kappa - min R̃_j`, reached when
    /// the other coordinate of the Gaussian region is unconstrained.
    pub fn user_bound(&self, j: usize) -> Result<f64> {
        let q = crate::gaussian::std_q_inv(self.eps_dec)?;
        let v = self.cov.get(j, j);
        let g = if v > 0.0 { v.sqrt() * q / (self.n as f64).sqrt() } else { 0.0 };
        Ok(self.h_u[j] - self.kappa_apx[j] - self.h_u_given_y[j] - g - self.kappa_dec)
    }
}

/// How feasibility of `R̃` is decided.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BcSearch {
    /// Sample the Gaussian region's boundary along [`SCAN_DIRECTIONS`] rays
    /// and test each sample against the caps.
    #[default]
    BoundaryScan,
    /// Maximise the Gaussian CDF along the caps' upper boundary. The CDF is
    /// log-concave, so the maximisation is unimodal.
    CapLineSearch,
}

/// A broadcast region ready for repeated membership queries.
#[derive(Clone, Debug)]
pub struct BcRegion {
    constants: BcConstants,
    gauss: GaussRegionSpec,
    search: BcSearch,
    /// Boundary samples already shifted to `R̃` coordinates.
    frontier: Vec<[f64; 2]>,
}

impl BcRegion {
    pub fn new(setup: &BCSetup, policy: &LogTermPolicy, search: BcSearch) -> Result<Self> {
        let constants = bc_constants(setup, policy)?;
        Self::from_constants(constants, search)
    }

    pub fn from_constants(constants: BcConstants, search: BcSearch) -> Result<Self> {
        let gauss = GaussRegionSpec::new(constants.cov, constants.eps_dec)?;
        let frontier = match search {
            BcSearch::BoundaryScan => {
                let s = (constants.n as f64).sqrt();
                let off = constants.offset();
                region_boundary(&gauss, &quadrant_directions(SCAN_DIRECTIONS))?
                    .into_iter()
                    .map(|b| [off[0] + b[0] / s, off[1] + b[1] / s])
                    .collect()
            }
            BcSearch::CapLineSearch => Vec::new(),
        };
        Ok(Self {
            constants,
            gauss,
            search,
            frontier,
        })
    }

    pub fn constants(&self) -> &BcConstants {
        &self.constants
    }

    pub fn contains(&self, r1: f64, r2: f64) -> bool {
        let [c1, c2, s] = self.constants.caps(r1, r2);
        if c1 < 0.0 || c2 < 0.0 || s < 0.0 {
            return false;
        }
        match self.search {
            BcSearch::BoundaryScan => self.frontier.iter().any(|x| {
                let a = x[0].max(0.0);
                let b = x[1].max(0.0);
                a <= c1 && b <= c2 && a + b <= s
            }),
            BcSearch::CapLineSearch => self.line_search(c1, c2, s),
        }
    }

    fn gauss_ok(&self, rt: [f64; 2]) -> bool {
        let sq = (self.constants.n as f64).sqrt();
        let off = self.constants.offset();
        let x = [
            (rt[0] - off[0]) * sq + BOUNDARY_TOL,
            (rt[1] - off[1]) * sq + BOUNDARY_TOL,
        ];
        self.gauss.cdf(x) >= 1.0 - self.gauss.eps()
    }

    fn line_search(&self, c1: f64, c2: f64, s: f64) -> bool {
        let lo = (s - c2).max(0.0);
        let hi = c1.min(s);
        if lo > hi {
            // the sum cap is slack: the single corner dominates
            return self.gauss_ok([c1, c2]);
        }
        let at = |x1: f64| [x1, (s - x1).min(c2)];
        let sq = (self.constants.n as f64).sqrt();
        let off = self.constants.offset();
        let log_cdf = |x1: f64| {
            let p = at(x1);
            self.gauss
                .cdf([(p[0] - off[0]) * sq, (p[1] - off[1]) * sq])
                .ln()
        };
        let (mut a, mut b) = (lo, hi);
        let g = 0.5 * (5f64.sqrt() - 1.0);
        let mut x1 = b - g * (b - a);
        let mut x2 = a + g * (b - a);
        let (mut f1, mut f2) = (log_cdf(x1), log_cdf(x2));
        for _ in 0..200 {
            if b - a < 1e-13 {
                break;
            }
            if f1 < f2 {
                a = x1;
                x1 = x2;
                f1 = f2;
                x2 = a + g * (b - a);
                f2 = log_cdf(x2);
            } else {
                b = x2;
                x2 = x1;
                f2 = f1;
                x1 = b - g * (b - a);
                f1 = log_cdf(x1);
            }
        }
        [lo, hi, 0.5 * (a + b)].into_iter().any(|x| self.gauss_ok(at(x)))
    }

    /// Per direction, the largest `t` with `t d` a member, to
    /// [`BOUNDARY_BITS_TOL`].
    pub fn boundary(&self, directions: &[[f64; 2]]) -> Result<Vec<[f64; 2]>> {
        if !self.contains(0.0, 0.0) {
            return Err(Error::InvalidArgument("the region is empty at this blocklength".into()));
        }
        let cap = self.constants.h_u[0] + self.constants.h_u[1] + 1.0;
        directions
            .iter()
            .map(|d| {
                if !(d[0] >= 0.0 && d[1] >= 0.0) || d[0] + d[1] <= 0.0 {
                    return Err(Error::InvalidArgument("directions must lie in the positive quadrant".into()));
                }
                let norm = d[0].max(d[1]);
                let (mut lo, mut hi) = (0.0, cap / norm);
                while (hi - lo) * norm > BOUNDARY_BITS_TOL {
                    let mid = 0.5 * (lo + hi);
                    if self.contains(mid * d[0], mid * d[1]) {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                Ok([lo * d[0], lo * d[1]])
            })
            .collect()
    }
}

pub fn bc_region_membership(setup: &BCSetup, r1: f64, r2: f64, policy: &LogTermPolicy) -> Result<bool> {
    Ok(BcRegion::new(setup, policy, BcSearch::default())?.contains(r1, r2))
}

pub fn bc_region_boundary(setup: &BCSetup, policy: &LogTermPolicy, directions: &[[f64; 2]]) -> Result<Vec<[f64; 2]>> {
    BcRegion::new(setup, policy, BcSearch::default())?.boundary(directions)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::secondorder::p2p::{p2p_rate, P2PSetup};
    use crate::prob::{Alphabet, Pmf};

    /// `X = (X1, X2)` with `U1 = X1`, `U2 = X2`, `P(U1 = U2) = agree`, sent
    /// over two BSCs acting on the separate halves.
    fn pair_setup(p1: f64, p2: f64, agree: f64, n: u64, eps: f64) -> BCSetup {
        let mut q = vec![0.0; 2 * 2 * 4];
        for u1 in 0..2 {
            for u2 in 0..2 {
                let w = if u1 == u2 { agree / 2.0 } else { (1.0 - agree) / 2.0 };
                q[(u1 * 2 + u2) * 4 + u1 * 2 + u2] = w;
            }
        }
        let q = JointPmf::from_sizes(&["U1", "U2", "X"], &[2, 2, 4], q).unwrap();
        let (a, b) = (Channel::bsc(p1).unwrap(), Channel::bsc(p2).unwrap());
        let rows: Vec<Vec<f64>> = (0..4)
            .map(|x| {
                let mut row = vec![0.0; 4];
                for y1 in 0..2 {
                    for y2 in 0..2 {
                        row[y1 * 2 + y2] = a.transition(x / 2, y1) * b.transition(x % 2, y2);
                    }
                }
                row
            })
            .collect();
        let ch = Channel::new(
            Alphabet::new("X", 4).unwrap(),
            vec![Alphabet::new("Y1", 2).unwrap(), Alphabet::new("Y2", 2).unwrap()],
            rows,
        )
        .unwrap();
        BCSetup::new(q, ch, n, eps).unwrap()
    }

    fn product_setup(p1: f64, p2: f64, n: u64, eps: f64) -> BCSetup {
        pair_setup(p1, p2, 0.5, n, eps)
    }

    /// Correlated auxiliaries, so the sum constraint binds.
    fn correlated_setup(n: u64, eps: f64) -> BCSetup {
        pair_setup(0.05, 0.1, 0.6, n, eps)
    }

    #[test]
    fn origin_member_and_cap() {
        let s = product_setup(0.05, 0.1, 10_000, 0.05);
        let p = LogTermPolicy::default();
        assert!(bc_region_membership(&s, 0.0, 0.0, &p).unwrap());
        assert!(!bc_region_membership(&s, 1.01, 0.0, &p).unwrap());
    }

    #[test]
    fn marton_limit() {
        let s = correlated_setup(100_000_000, 0.1);
        let region = BcRegion::new(&s, &LogTermPolicy::default(), BcSearch::default()).unwrap();
        let [i1, i2, isum] = s.marton_limit().unwrap();
        for d in quadrant_directions(32) {
            let b = region.boundary(&[d]).unwrap()[0];
            let t_lim = (i1 / d[0]).min(i2 / d[1]).min(isum / (d[0] + d[1]));
            let t = b[0].hypot(b[1]);
            assert!((t - t_lim).abs() < 1e-3, "{t} vs {t_lim}");
        }
    }

    #[test]
    fn scan_and_line_search_agree() {
        let p = LogTermPolicy::default();
        for s in [correlated_setup(2000, 0.1), product_setup(0.05, 0.2, 5000, 0.05)] {
            let scan = BcRegion::new(&s, &p, BcSearch::BoundaryScan).unwrap();
            let line = BcRegion::new(&s, &p, BcSearch::CapLineSearch).unwrap();
            let dirs = quadrant_directions(16);
            let a = scan.boundary(&dirs).unwrap();
            let b = line.boundary(&dirs).unwrap();
            for (x, y) in a.iter().zip(&b) {
                // the scan only sees 256 samples of the Gaussian boundary
                assert!(x[0] <= y[0] + 1e-6 && (x[0] - y[0]).abs() < 2e-3, "{x:?} vs {y:?}");
                assert!((x[1] - y[1]).abs() < 2e-3);
            }
        }
    }

    #[test]
    fn symmetric_setup_symmetric_boundary() {
        let s = product_setup(0.1, 0.1, 5000, 0.05);
        let dirs = quadrant_directions(20);
        let b = bc_region_boundary(&s, &LogTermPolicy::default(), &dirs).unwrap();
        for i in 0..dirs.len() {
            let j = dirs.len() - 1 - i;
            assert!((b[i][0] - b[j][1]).abs() < 1e-5 && (b[i][1] - b[j][0]).abs() < 1e-5);
        }
    }

    #[test]
    fn boundary_definition_replay() {
        let s = correlated_setup(3000, 0.1);
        let region = BcRegion::new(&s, &LogTermPolicy::default(), BcSearch::default()).unwrap();
        for d in quadrant_directions(12) {
            let b = region.boundary(&[d]).unwrap()[0];
            assert!(region.contains(b[0], b[1]));
            assert!(!region.contains(b[0] + 1e-3 * d[0], b[1] + 1e-3 * d[1]));
        }
    }

    #[test]
    fn nesting_in_eps_and_downward_closure() {
        let p = LogTermPolicy::default();
        let dirs = quadrant_directions(16);
        let mut prev: Option<Vec<[f64; 2]>> = None;
        for eps in [0.05, 0.1, 0.2, 0.3] {
            let b = bc_region_boundary(&correlated_setup(3000, eps), &p, &dirs).unwrap();
            if let Some(pb) = &prev {
                for (x, y) in pb.iter().zip(&b) {
                    assert!(y[0] >= x[0] - 1e-6 && y[1] >= x[1] - 1e-6);
                }
            }
            prev = Some(b);
        }
        let region = BcRegion::new(&correlated_setup(3000, 0.1), &p, BcSearch::default()).unwrap();
        let step = 0.01;
        for i in 0..60 {
            for j in 0..60 {
                let (r1, r2) = (i as f64 * step, j as f64 * step);
                if region.contains(r1, r2) {
                    assert!(r1 < step / 2.0 || region.contains(r1 - step, r2));
                    assert!(r2 < step / 2.0 || region.contains(r1, r2 - step));
                }
            }
        }
    }

    #[test]
    fn identical_branches_match_p2p() {
        let n = 4000;
        let eps = 0.05;
        let mut q = vec![0.0; 8];
        for x in 0..2 {
            q[(x * 2 + x) * 2 + x] = 0.5;
        }
        let q = JointPmf::from_sizes(&["U1", "U2", "X"], &[2, 2, 2], q).unwrap();
        let bsc = Channel::bsc(0.11).unwrap();
        let rows: Vec<Vec<f64>> = (0..2)
            .map(|x| {
                let mut r = vec![0.0; 4];
                for y in 0..2 {
                    r[y * 2 + y] = bsc.transition(x, y);
                }
                r
            })
            .collect();
        let ch = Channel::new(
            Alphabet::new("X", 2).unwrap(),
            vec![Alphabet::new("Y1", 2).unwrap(), Alphabet::new("Y2", 2).unwrap()],
            rows,
        )
        .unwrap();
        let bc = BCSetup::new(q, ch, n, eps).unwrap();
        let p = LogTermPolicy::default();
        let c = bc_constants(&bc, &p).unwrap();
        let p2p = P2PSetup::new(Pmf::uniform(Alphabet::new("X", 2).unwrap()), bsc, n, eps).unwrap();
        let r = p2p_rate(&p2p, &p).unwrap().unclamped;
        for j in 0..2 {
            assert!((c.user_bound(j).unwrap() - r).abs() < 1e-9);
        }
    }
}
