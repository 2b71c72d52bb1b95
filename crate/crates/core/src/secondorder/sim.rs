//! Monte Carlo simulators for the binning-based channel codes.
//!
//! The point-to-point protocol: every sequence gets independent uniform
//! indices `m` and `f`; the encoder draws `x^n` uniformly from the members of
//! the type class that fall into cell `(m, f)`; the decoder samples from
//! `t(x^n | y^n) 1{f(x^n) = f}` with the product metric and outputs
//! `m(x̂^n)`. An empty cell is an encoder failure and counts as an error.
//!
//! Two simulators produce the same error law:
//! * literal: draws the whole binning over `X^n`, for tiny `n`;
//! * lazy: draws only how many sequences of each joint type with `y^n`
//!   share the transmitted bin, which is all the decoder's posterior depends
//!   on.
//!
//! Both report the posterior error probability given the sampled state
//! rather than a 0/1 outcome, which has the same mean and less variance.

use std::collections::HashMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Hypergeometric, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::prob::Channel;
use crate::rng::{self, McEstimate, MeanAcc};
use crate::typeclass::{sample_from_type, type_class_log_size, NType, TypeClassDist};

use super::p2p::{p2p_rtilde, P2PSetup};
use super::wiretap::{wiretap_budget, WiretapSetup};
use super::LogTermPolicy;

/// Largest `|X|^n` the literal simulator will enumerate.
pub const LITERAL_SEQUENCE_LIMIT: usize = 1 << 16;
/// Largest number of joint-type groups per output type.
pub const GROUP_LIMIT: usize = 1 << 20;
/// Largest `|Z|^n * |T|` for exact secrecy histograms.
pub const HISTOGRAM_LIMIT: usize = 1 << 24;
/// Groups whose expected bin population is below this share one Poisson draw.
const POOL_LAMBDA: f64 = 1e-6;
/// Outside-type groups are skipped once the expected metric mass they could
/// still add, relative to the sent sequence, drops below this. The posterior
/// error moves by at most that mass.
pub const PRUNE_MASS: f64 = 1e-10;
/// Above this mean a count is drawn from its normal approximation.
const NORMAL_LAMBDA: f64 = 1e12;
/// Counts below this are exact integers in `f64` and use exact samplers.
const EXACT_COUNT: f64 = 9.0e15;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimMethod {
    /// Literal when `|X|^n` and both bin counts are small, lazy otherwise.
    #[default]
    Auto,
    Literal,
    Lazy,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct P2PSimReport {
    pub error: McEstimate,
    /// Mean probability that the encoder's cell was empty.
    pub encoder_failure: f64,
    pub log2_messages: f64,
    pub log2_bins: f64,
    pub method: SimMethod,
}

fn binomial(n: f64, p: f64, rng: &mut ChaCha8Rng) -> f64 {
    if !(n >= 0.5) || p <= 0.0 {
        return 0.0;
    }
    if p >= 1.0 {
        return n.round();
    }
    if n < EXACT_COUNT {
        return Binomial::new(n.round() as u64, p).expect("valid binomial").sample(rng) as f64;
    }
    poisson_like(n * p, p, rng)
}

fn poisson_like(lam: f64, p: f64, rng: &mut ChaCha8Rng) -> f64 {
    if lam <= 0.0 {
        0.0
    } else if lam < NORMAL_LAMBDA {
        Poisson::new(lam).expect("valid poisson").sample(rng)
    } else {
        let z: f64 = rng.sample(StandardNormal);
        (lam + (lam * (1.0 - p)).sqrt() * z).round().max(0.0)
    }
}

/// `Binomial(n, p)` conditioned on being at least one.
fn positive_binomial(n: f64, p: f64, rng: &mut ChaCha8Rng) -> f64 {
    if n * p > 1.0 {
        loop {
            let k = binomial(n, p, rng);
            if k >= 1.0 {
                return k;
            }
        }
    }
    let log_p0 = n * (-p).ln_1p();
    let positive = -log_p0.exp_m1();
    let u = rng.random::<f64>() * positive;
    let ratio = p / (1.0 - p);
    let mut pk = log_p0.exp() * n * ratio;
    let mut acc = 0.0;
    let mut k = 1.0;
    loop {
        acc += pk;
        if u <= acc || k >= n || pk == 0.0 {
            return k;
        }
        pk *= (n - k) / (k + 1.0) * ratio;
        k += 1.0;
    }
}

/// Successes in `draws` picks without replacement from `total` items of which
/// `marked` are successes.
fn hypergeometric(total: f64, marked: f64, draws: f64, rng: &mut ChaCha8Rng) -> f64 {
    if marked > total - marked {
        return draws - hypergeometric(total, total - marked, draws, rng);
    }
    if draws > total - draws {
        return marked - hypergeometric(total, marked, total - draws, rng);
    }
    if marked <= 0.0 || draws <= 0.0 {
        return 0.0;
    }
    if total >= EXACT_COUNT {
        return binomial(draws, marked / total, rng).min(marked);
    }
    let mode = ((draws + 1.0) * (marked + 1.0) / (total + 2.0)).floor();
    if mode >= 10.0 {
        // the library's rejection sampler has O(1) setup in this regime
        return Hypergeometric::new(total as u64, marked as u64, draws as u64)
            .expect("valid hypergeometric")
            .sample(rng) as f64;
    }
    // inversion from zero; the library's version sets up in O(total)
    let mut p = (ln_gamma(total - marked + 1.0) + ln_gamma(total - draws + 1.0)
        - ln_gamma(total - marked - draws + 1.0)
        - ln_gamma(total + 1.0))
    .exp();
    let mut u = rng.random::<f64>();
    let mut x = 0.0;
    let top = marked.min(draws);
    while u > p && x < top {
        u -= p;
        p *= (marked - x) * (draws - x) / ((x + 1.0) * (total - marked - draws + x + 1.0));
        x += 1.0;
    }
    x
}

/// Draws `draws` items without replacement from groups of sizes `pop`.
fn split_draws(pop: &[f64], draws: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut out = vec![0.0; pop.len()];
    let mut rem_pop: f64 = pop.iter().sum();
    if draws <= 0.0 {
        return out;
    }
    if draws <= 64.0 {
        // one item at a time: exact and cheap for the usual tiny counts
        let mut left = pop.to_vec();
        for _ in 0..draws as usize {
            let mut u = rng.random::<f64>() * rem_pop;
            let mut pick = left.len() - 1;
            for (i, &c) in left.iter().enumerate() {
                if u < c {
                    pick = i;
                    break;
                }
                u -= c;
            }
            while left[pick] < 1.0 {
                pick -= 1;
            }
            left[pick] -= 1.0;
            out[pick] += 1.0;
            rem_pop -= 1.0;
        }
        return out;
    }
    let mut rem = draws;
    for (i, &c) in pop.iter().enumerate() {
        if rem <= 0.0 {
            break;
        }
        if c <= 0.0 {
            continue;
        }
        let k = if c >= rem_pop {
            rem
        } else {
            hypergeometric(rem_pop, c, rem, rng)
        };
        out[i] = k;
        rem -= k;
        rem_pop -= c;
    }
    out
}

/// Running `log2 sum 2^{l_i}`.
#[derive(Clone, Copy)]
struct Log2Sum {
    max: f64,
    scaled: f64,
}

impl Log2Sum {
    fn new() -> Self {
        Self {
            max: f64::NEG_INFINITY,
            scaled: 0.0,
        }
    }

    fn add(&mut self, l: f64) {
        if l == f64::NEG_INFINITY {
            return;
        }
        if l > self.max {
            self.scaled = self.scaled * (self.max - l).exp2() + 1.0;
            self.max = l;
        } else {
            self.scaled += (l - self.max).exp2();
        }
    }

    fn value(&self) -> f64 {
        if self.scaled == 0.0 {
            f64::NEG_INFINITY
        } else {
            self.max + self.scaled.log2()
        }
    }
}

fn log2_sum2(a: f64, b: f64) -> f64 {
    let mut s = Log2Sum::new();
    s.add(a);
    s.add(b);
    s.value()
}

/// One class of candidate sequences: same joint type with the received
/// `y^n`, hence same metric value.
#[derive(Clone, Debug)]
struct Group {
    count: f64,
    log2_w: f64,
    in_type: bool,
}

#[derive(Clone, Debug)]
struct GroupTable {
    groups: Vec<Group>,
    /// Per output symbol: composition -> index.
    comp_index: Vec<HashMap<Vec<usize>, usize>>,
    strides: Vec<usize>,
    type_groups: Vec<usize>,
    single: Vec<usize>,
    pooled: Vec<usize>,
    pooled_cum: Vec<f64>,
}

fn compositions(total: usize, parts: usize) -> Vec<Vec<usize>> {
    if parts == 1 {
        return vec![vec![total]];
    }
    let mut out = Vec::new();
    for first in 0..=total {
        for mut rest in compositions(total - first, parts - 1) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

fn binom_usize(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

struct LazyContext {
    kx: usize,
    ky: usize,
    /// `log2 (q(x) W(y|x))`, indexed `[x][y]`
    lw: Vec<Vec<f64>>,
    log2_fact: Vec<f64>,
    phi: NType,
    log2_t: f64,
    p_bin: f64,
    p_msg: f64,
}

impl LazyContext {
    fn table(&self, y_counts: &[usize]) -> Result<GroupTable> {
        let total: f64 = y_counts.iter().map(|&nb| binom_usize(nb + self.kx - 1, self.kx - 1)).product();
        if total > GROUP_LIMIT as f64 {
            return Err(Error::GuardExceeded {
                what: "joint-type groups",
                requested: total,
                limit: GROUP_LIMIT as f64,
            });
        }
        let comps: Vec<Vec<Vec<usize>>> = y_counts.iter().map(|&nb| compositions(nb, self.kx)).collect();
        let comp_index = comps
            .iter()
            .map(|cs| cs.iter().enumerate().map(|(i, c)| (c.clone(), i)).collect())
            .collect();
        let mut strides = vec![1usize; self.ky];
        for b in (0..self.ky.saturating_sub(1)).rev() {
            strides[b] = strides[b + 1] * comps[b + 1].len();
        }
        let total = total as usize;
        let mut groups = Vec::with_capacity(total);
        let mut xt = vec![0usize; self.kx];
        for key in 0..total {
            xt.iter_mut().for_each(|v| *v = 0);
            let (mut lc, mut lw) = (0.0, 0.0);
            for b in 0..self.ky {
                let c = &comps[b][(key / strides[b]) % comps[b].len()];
                lc += self.log2_fact[y_counts[b]];
                for (a, &k) in c.iter().enumerate() {
                    lc -= self.log2_fact[k];
                    xt[a] += k;
                    if k > 0 {
                        lw += k as f64 * self.lw[a][b];
                    }
                }
            }
            let count = if lc < 52.0 { lc.exp2().round() } else { lc.exp2() };
            groups.push(Group {
                count,
                log2_w: if lw.is_nan() { f64::NEG_INFINITY } else { lw },
                in_type: xt == self.phi.counts(),
            });
        }
        let mut type_groups = Vec::new();
        let mut single = Vec::new();
        let mut pooled = Vec::new();
        let mut pooled_cum = Vec::new();
        let mut cum = 0.0;
        for (i, g) in groups.iter().enumerate() {
            if g.log2_w == f64::NEG_INFINITY {
                continue;
            }
            if g.in_type {
                type_groups.push(i);
            } else if g.count * self.p_bin < POOL_LAMBDA {
                cum += g.count * self.p_bin;
                pooled.push(i);
                pooled_cum.push(cum);
            } else {
                single.push(i);
            }
        }
        // largest expected contribution first, so a trial can stop early
        let reach = |i: &usize| groups[*i].count.log2() + groups[*i].log2_w;
        single.sort_by(|a, b| reach(b).total_cmp(&reach(a)));
        Ok(GroupTable {
            groups,
            comp_index,
            strides,
            type_groups,
            single,
            pooled,
            pooled_cum,
        })
    }

    /// Posterior message-error probability for one transmission.
    fn trial(&self, cache: &mut HashMap<Vec<usize>, GroupTable>, ch: &Channel, rng: &mut ChaCha8Rng) -> Result<f64> {
        let t_size = self.log2_t.exp2();
        let q_cell = self.p_bin * self.p_msg;
        let p_empty = (t_size * (-q_cell).ln_1p()).exp();
        if self.p_msg >= 1.0 {
            // a single message cannot be decoded wrongly
            return Ok(p_empty);
        }
        let x = sample_from_type(&self.phi, rng);
        let mut joint = vec![vec![0usize; self.ky]; self.kx];
        let mut y_counts = vec![0usize; self.ky];
        for &a in &x {
            let b = ch.sample(a, rng);
            joint[a][b] += 1;
            y_counts[b] += 1;
        }
        if !cache.contains_key(&y_counts) {
            let t = self.table(&y_counts)?;
            cache.insert(y_counts.clone(), t);
        }
        let table = &cache[&y_counts];
        let own_key: usize = (0..self.ky)
            .map(|b| {
                let comp: Vec<usize> = (0..self.kx).map(|a| joint[a][b]).collect();
                table.comp_index[b][&comp] * table.strides[b]
            })
            .sum();
        let lw_x = table.groups[own_key].log2_w;

        let mut same = Log2Sum::new();
        let mut diff = Log2Sum::new();
        let add = |acc: &mut Log2Sum, k: f64, g: &Group| {
            if k > 0.0 {
                acc.add(k.log2() + g.log2_w - lw_x);
            }
        };

        // other members of the type class: same cell (tilted by the
        // encoder's uniform choice inside the cell) or same f only
        let pop: Vec<f64> = table
            .type_groups
            .iter()
            .map(|&i| table.groups[i].count - if i == own_key { 1.0 } else { 0.0 })
            .collect();
        let others: f64 = pop.iter().sum();
        let k_same = positive_binomial(t_size, q_cell, rng) - 1.0;
        let k_same = k_same.min(others);
        let p_f_only = (self.p_bin - q_cell) / (1.0 - q_cell);
        let j_f = binomial(others - k_same, p_f_only, rng);
        let in_cell = split_draws(&pop, k_same, rng);
        let rest: Vec<f64> = pop.iter().zip(&in_cell).map(|(c, k)| c - k).collect();
        let in_f = split_draws(&rest, j_f, rng);
        for (idx, &i) in table.type_groups.iter().enumerate() {
            add(&mut same, in_cell[idx], &table.groups[i]);
            add(&mut diff, in_f[idx], &table.groups[i]);
        }

        // sequences outside the type class: independent indices
        let cutoff = lw_x + (PRUNE_MASS / table.single.len().max(1) as f64).log2() - self.p_bin.log2();
        for &i in &table.single {
            let g = &table.groups[i];
            if g.count.log2() + g.log2_w < cutoff {
                break;
            }
            let d = binomial(g.count, self.p_bin, rng);
            if d > 0.0 {
                let s = binomial(d, self.p_msg, rng);
                add(&mut same, s, g);
                add(&mut diff, d - s, g);
            }
        }
        if let Some(&total) = table.pooled_cum.last() {
            let hits = poisson_like(total, 0.0, rng) as u64;
            for _ in 0..hits {
                let u = rng.random::<f64>() * total;
                let pos = table.pooled_cum.partition_point(|&c| c < u).min(table.pooled.len() - 1);
                let g = &table.groups[table.pooled[pos]];
                if rng.random::<f64>() < self.p_msg {
                    add(&mut same, 1.0, g);
                } else {
                    add(&mut diff, 1.0, g);
                }
            }
        }
        let l_diff = diff.value();
        let denom = log2_sum2(log2_sum2(0.0, same.value()), l_diff);
        let err = if l_diff == f64::NEG_INFINITY { 0.0 } else { (l_diff - denom).exp2() };
        Ok(p_empty + (1.0 - p_empty) * err)
    }
}

struct LiteralContext {
    kx: usize,
    n: usize,
    q: Vec<f64>,
    members: Vec<usize>,
    m_count: u64,
    f_count: u64,
}

impl LiteralContext {
    fn digits(&self, mut idx: usize, out: &mut [usize]) {
        for i in (0..self.n).rev() {
            out[i] = idx % self.kx;
            idx /= self.kx;
        }
    }

    /// Returns `(posterior error, encoder failed)`.
    fn trial(&self, ch: &Channel, rng: &mut ChaCha8Rng) -> (f64, bool) {
        let total = self.kx.pow(self.n as u32);
        let m_map: Vec<u64> = (0..total).map(|_| rng.random_range(0..self.m_count)).collect();
        let f_map: Vec<u64> = (0..total).map(|_| rng.random_range(0..self.f_count)).collect();
        let m0 = rng.random_range(0..self.m_count);
        let f0 = rng.random_range(0..self.f_count);
        let cell: Vec<usize> = self
            .members
            .iter()
            .copied()
            .filter(|&s| m_map[s] == m0 && f_map[s] == f0)
            .collect();
        if cell.is_empty() {
            return (1.0, true);
        }
        let xs = cell[rng.random_range(0..cell.len())];
        let mut x = vec![0; self.n];
        self.digits(xs, &mut x);
        let y: Vec<usize> = x.iter().map(|&a| ch.sample(a, rng)).collect();
        let (mut good, mut all) = (0.0, 0.0);
        let mut cand = vec![0; self.n];
        for s in (0..total).filter(|&s| f_map[s] == f0) {
            self.digits(s, &mut cand);
            let w: f64 = cand
                .iter()
                .zip(&y)
                .map(|(&a, &b)| self.q[a] * ch.transition(a, b))
                .product();
            all += w;
            if m_map[s] == m0 {
                good += w;
            }
        }
        (1.0 - good / all, false)
    }
}

fn type_members(phi: &NType, kx: usize, n: usize) -> Vec<usize> {
    let total = kx.pow(n as u32);
    let mut seq = vec![0; n];
    (0..total)
        .filter(|&s| {
            let mut idx = s;
            for i in (0..n).rev() {
                seq[i] = idx % kx;
                idx /= kx;
            }
            NType::of_sequence(&seq, kx).is_ok_and(|t| &t == phi)
        })
        .collect()
}

fn literal_fits(kx: usize, n: u64, log2_m: f64, log2_f: f64) -> bool {
    (n as f64) * (kx as f64).log2() <= (LITERAL_SEQUENCE_LIMIT as f64).log2() && log2_m <= 20.0 && log2_f <= 20.0
}

/// Runs the point-to-point protocol with `2^{log2_m}` messages and
/// `2^{log2_f}` decoder bins. The literal simulator rounds both counts to
/// integers; the lazy one uses them as given.
pub fn simulate_protocol(
    setup: &P2PSetup,
    log2_m: f64,
    log2_f: f64,
    trials: u64,
    seed: u64,
    method: SimMethod,
) -> Result<P2PSimReport> {
    if !(log2_m >= 0.0) || !(log2_f >= 0.0) {
        return Err(Error::InvalidArgument("bin counts must be at least one".into()));
    }
    if trials < 2 {
        return Err(Error::InvalidArgument("need at least two trials".into()));
    }
    let phi = setup.ntype()?;
    let kx = setup.input.len();
    let ky = setup.channel.output_size();
    let n = setup.n as usize;
    let method = match method {
        SimMethod::Auto if literal_fits(kx, setup.n, log2_m, log2_f) => SimMethod::Literal,
        SimMethod::Auto => SimMethod::Lazy,
        m => m,
    };
    let ch = &setup.channel;
    match method {
        SimMethod::Literal => {
            if !literal_fits(kx, setup.n, log2_m, log2_f) {
                return Err(Error::GuardExceeded {
                    what: "literal simulation size",
                    requested: (n as f64) * (kx as f64).log2(),
                    limit: (LITERAL_SEQUENCE_LIMIT as f64).log2(),
                });
            }
            let ctx = LiteralContext {
                kx,
                n,
                q: setup.input.probs().to_vec(),
                members: type_members(&phi, kx, n),
                m_count: (log2_m.exp2().round() as u64).max(1),
                f_count: (log2_f.exp2().round() as u64).max(1),
            };
            let parts = rng::par_blocks(seed, 0x9292, trials, |r, count| {
                let (mut acc, mut fail) = (MeanAcc::default(), MeanAcc::default());
                for _ in 0..count {
                    let (e, failed) = ctx.trial(ch, r);
                    acc.push(e);
                    fail.push(if failed { 1.0 } else { 0.0 });
                }
                (acc, fail)
            });
            let (errs, fails): (Vec<_>, Vec<_>) = parts.into_iter().unzip();
            Ok(P2PSimReport {
                error: finish(rng::reduce(errs)),
                encoder_failure: rng::reduce(fails).mean,
                log2_messages: (ctx.m_count as f64).log2(),
                log2_bins: (ctx.f_count as f64).log2(),
                method,
            })
        }
        _ => {
            let q = setup.input.probs();
            let lw = (0..kx)
                .map(|a| (0..ky).map(|b| (q[a] * ch.transition(a, b)).log2()).collect())
                .collect();
            let mut log2_fact = vec![0.0; n + 1];
            for i in 1..=n {
                log2_fact[i] = log2_fact[i - 1] + (i as f64).log2();
            }
            let ctx = LazyContext {
                kx,
                ky,
                lw,
                log2_fact,
                log2_t: type_class_log_size(&phi),
                phi,
                p_bin: (-log2_f).exp2(),
                p_msg: (-log2_m).exp2(),
            };
            let p_empty = (ctx.log2_t.exp2() * (-(ctx.p_bin * ctx.p_msg)).ln_1p()).exp();
            let parts = rng::par_blocks(seed, 0x1a2f, trials, |r, count| {
                let mut cache = HashMap::new();
                let mut acc = MeanAcc::default();
                for _ in 0..count {
                    acc.push(ctx.trial(&mut cache, ch, r)?);
                }
                Ok(acc)
            });
            let parts: Result<Vec<MeanAcc>> = parts.into_iter().collect();
            Ok(P2PSimReport {
                error: finish(rng::reduce(parts?)),
                encoder_failure: p_empty,
                log2_messages: log2_m,
                log2_bins: log2_f,
                method,
            })
        }
    }
}

fn finish(mut e: McEstimate) -> McEstimate {
    if e.half_width.is_nan() {
        e.half_width = 0.0;
    }
    e
}

/// Simulates the protocol at message rate `rate` with the binning budget
/// `n R̃` from [`p2p_rtilde`].
pub fn p2p_simulate(
    setup: &P2PSetup,
    rate: f64,
    policy: &LogTermPolicy,
    trials: u64,
    seed: u64,
    method: SimMethod,
) -> Result<P2PSimReport> {
    if !(rate >= 0.0) {
        return Err(Error::OutOfDomain {
            name: "rate",
            value: rate,
        });
    }
    let rt = p2p_rtilde(setup, policy)?;
    simulate_protocol(setup, setup.n as f64 * rate, rt.total.max(0.0), trials, seed, method)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WiretapSimReport {
    /// Mean exact secrecy distance over the scanned `(binning, f)` pairs.
    pub tv: McEstimate,
    /// Smallest secrecy distance seen in the scan.
    pub best_tv: f64,
    pub scan_size: u64,
    /// Decoding error at the legitimate receiver.
    pub error: McEstimate,
    /// Histograms are exact, so the estimator has no bias.
    pub bias_bound: f64,
    pub log2_messages: f64,
    pub log2_bins: f64,
}

struct WiretapContext {
    n: usize,
    ku: usize,
    kz_n: usize,
    q_u: Vec<f64>,
    ch_y: Channel,
    members: Vec<Vec<usize>>,
    /// `q(z^n | u^n)` per member
    z_rows: Vec<Vec<f64>>,
    z_mean: Vec<f64>,
    m_count: u64,
    f_count: u64,
    draws: u64,
}

impl WiretapContext {
    fn index_of(&self, u: &[usize]) -> usize {
        u.iter().fold(0, |acc, &a| acc * self.ku + a)
    }

    /// `(tv, mean decoding error)` for one sampled binning and `f`.
    fn sample(&self, rng: &mut ChaCha8Rng) -> (f64, f64) {
        let total = self.ku.pow(self.n as u32);
        let m_map: Vec<u64> = (0..total).map(|_| rng.random_range(0..self.m_count)).collect();
        let f_map: Vec<u64> = (0..total).map(|_| rng.random_range(0..self.f_count)).collect();
        let f0 = rng.random_range(0..self.f_count);
        let mut cells: Vec<Vec<usize>> = vec![Vec::new(); self.m_count as usize];
        for (i, u) in self.members.iter().enumerate() {
            let s = self.index_of(u);
            if f_map[s] == f0 {
                cells[m_map[s] as usize].push(i);
            }
        }
        let mf = self.m_count as f64;
        let mut rows = Vec::with_capacity(cells.len());
        let mut pz = vec![0.0; self.kz_n];
        for cell in &cells {
            let row = if cell.is_empty() {
                // the encoder falls back to a uniform member of the class
                self.z_mean.clone()
            } else {
                let mut r = vec![0.0; self.kz_n];
                for &i in cell {
                    for (a, b) in r.iter_mut().zip(&self.z_rows[i]) {
                        *a += b;
                    }
                }
                let c = cell.len() as f64;
                r.iter_mut().for_each(|v| *v /= c);
                r
            };
            for (a, b) in pz.iter_mut().zip(&row) {
                *a += b / mf;
            }
            rows.push(row);
        }
        let mut tv = 0.0;
        for row in &rows {
            for (a, b) in row.iter().zip(&pz) {
                tv += (a / mf - b / mf).abs();
            }
        }
        tv *= 0.5;

        let mut err = 0.0;
        let mut cand = vec![0usize; self.n];
        for _ in 0..self.draws {
            let m = rng.random_range(0..self.m_count) as usize;
            let u = if cells[m].is_empty() {
                &self.members[rng.random_range(0..self.members.len())]
            } else {
                &self.members[cells[m][rng.random_range(0..cells[m].len())]]
            };
            let y: Vec<usize> = u.iter().map(|&a| self.ch_y.sample(a, rng)).collect();
            let (mut good, mut all) = (0.0, 0.0);
            for s in (0..total).filter(|&s| f_map[s] == f0) {
                let mut idx = s;
                for i in (0..self.n).rev() {
                    cand[i] = idx % self.ku;
                    idx /= self.ku;
                }
                let w: f64 = cand
                    .iter()
                    .zip(&y)
                    .map(|(&a, &b)| self.q_u[a] * self.ch_y.transition(a, b))
                    .product();
                all += w;
                if m_map[s] as usize == m {
                    good += w;
                }
            }
            err += if all > 0.0 { 1.0 - good / all } else { 1.0 };
        }
        (tv, err / self.draws.max(1) as f64)
    }
}

/// Scans `scan` random `(binning, f)` pairs of the wiretap code at message
/// rate `rate` and reports the exact secrecy distance
/// `|| p_{M Z^n} - p^U_M p_{Z^n} ||` of each, plus the decoding error at `Y`
/// from `decode_draws` transmissions per pair.
pub fn wiretap_simulate_secrecy(
    setup: &WiretapSetup,
    rate: f64,
    policy: &LogTermPolicy,
    scan: u64,
    decode_draws: u64,
    seed: u64,
) -> Result<WiretapSimReport> {
    if !(rate >= 0.0) {
        return Err(Error::OutOfDomain {
            name: "rate",
            value: rate,
        });
    }
    if scan < 2 {
        return Err(Error::InvalidArgument("need at least two scanned instances".into()));
    }
    let budget = wiretap_budget(setup, policy)?;
    let n = setup.n as usize;
    let q_u = setup.q_u();
    let ku = q_u.len();
    let ch_y = setup.composite(0)?;
    let ch_z = setup.composite(1)?;
    let kz = ch_z.output_size();
    let seq_log2 = n as f64 * (ku as f64).log2();
    if seq_log2 > (LITERAL_SEQUENCE_LIMIT as f64).log2() {
        return Err(Error::GuardExceeded {
            what: "auxiliary sequences",
            requested: seq_log2.exp2(),
            limit: LITERAL_SEQUENCE_LIMIT as f64,
        });
    }
    let kz_n = (kz as f64).powi(n as i32);
    let phi = setup.ntype()?;
    let class = TypeClassDist::new(phi);
    let hist = kz_n * class.log_size().exp2();
    if hist > HISTOGRAM_LIMIT as f64 {
        return Err(Error::GuardExceeded {
            what: "secrecy histogram",
            requested: hist,
            limit: HISTOGRAM_LIMIT as f64,
        });
    }
    let members = class.members(HISTOGRAM_LIMIT)?;
    let kz_n = kz_n as usize;
    let z_rows: Vec<Vec<f64>> = members
        .iter()
        .map(|u| {
            let mut row = vec![1.0; 1];
            for &a in u {
                let mut next = Vec::with_capacity(row.len() * kz);
                for v in &row {
                    for z in 0..kz {
                        next.push(v * ch_z.transition(a, z));
                    }
                }
                row = next;
            }
            row
        })
        .collect();
    let mut z_mean = vec![0.0; kz_n];
    for r in &z_rows {
        for (a, b) in z_mean.iter_mut().zip(r) {
            *a += b / members.len() as f64;
        }
    }
    let log2_m = setup.n as f64 * rate;
    let log2_f = budget.n_rtilde.max(0.0);
    if log2_m > 16.0 || log2_f > 32.0 {
        return Err(Error::GuardExceeded {
            what: "wiretap bin counts",
            requested: log2_m.max(log2_f),
            limit: 16.0,
        });
    }
    let ctx = WiretapContext {
        n,
        ku,
        kz_n,
        q_u: q_u.probs().to_vec(),
        ch_y,
        members,
        z_rows,
        z_mean,
        m_count: (log2_m.exp2().round() as u64).max(1),
        f_count: (log2_f.exp2().round() as u64).max(1),
        draws: decode_draws,
    };
    let parts = rng::par_blocks(seed, 0x7a9e, scan, |r, count| {
        let (mut tv, mut err) = (MeanAcc::default(), MeanAcc::default());
        let mut best = f64::INFINITY;
        for _ in 0..count {
            let (t, e) = ctx.sample(r);
            tv.push(t);
            err.push(e);
            best = best.min(t);
        }
        (tv, err, best)
    });
    let best_tv = parts.iter().map(|p| p.2).fold(f64::INFINITY, f64::min);
    let (tvs, errs): (Vec<_>, Vec<_>) = parts.into_iter().map(|p| (p.0, p.1)).unzip();
    Ok(WiretapSimReport {
        tv: finish(rng::reduce(tvs)),
        best_tv,
        scan_size: scan,
        error: finish(rng::reduce(errs)),
        bias_bound: 0.0,
        log2_messages: (ctx.m_count as f64).log2(),
        log2_bins: (ctx.f_count as f64).log2(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prob::{Alphabet, JointPmf, Pmf};

    fn bsc_setup(p: f64, n: u64, eps: f64) -> P2PSetup {
        P2PSetup::new(
            Pmf::uniform(Alphabet::new("X", 2).unwrap()),
            Channel::bsc(p).unwrap(),
            n,
            eps,
        )
        .unwrap()
    }

    #[test]
    fn samplers_have_the_right_means() {
        let mut r = rng::substream(1, 2, 3);
        let draws = 20_000;
        let mean = |f: &mut dyn FnMut(&mut ChaCha8Rng) -> f64, r: &mut ChaCha8Rng| {
            (0..draws).map(|_| f(r)).sum::<f64>() / draws as f64
        };
        let m = mean(&mut |r| binomial(50.0, 0.2, r), &mut r);
        assert!((m - 10.0).abs() < 0.2);
        let m = mean(&mut |r| binomial(1e20, 1e-18, r), &mut r);
        assert!((m - 100.0).abs() < 1.0);
        // zero-truncated binomial mean: n p / (1 - (1-p)^n)
        for (n, p) in [(10.0f64, 0.05f64), (1e30, 1e-31), (40.0, 0.2)] {
            let expect = n * p / -(n * (-p).ln_1p()).exp_m1();
            let m = mean(&mut |r| positive_binomial(n, p, r), &mut r);
            assert!((m - expect).abs() < 0.05 * expect.max(1.0), "{n} {p}: {m} vs {expect}");
        }
        let split = split_draws(&[3.0, 0.0, 5.0, 2.0], 10.0, &mut r);
        assert_eq!(split, vec![3.0, 0.0, 5.0, 2.0]);
        let m = mean(&mut |r| split_draws(&[30.0, 70.0], 10.0, r)[0], &mut r);
        assert!((m - 3.0).abs() < 0.05);
        // every branch of the hypergeometric sampler: mean draws * marked / total
        for (t, k, d) in [(1e11, 3e4, 2e5), (1e11, 6e10, 1e5), (1e6, 4e5, 2e5), (500.0, 480.0, 450.0), (1e17, 1e9, 1e9)] {
            let m = mean(&mut |r| hypergeometric(t, k, d, r), &mut r);
            let expect = d * k / t;
            assert!((m - expect).abs() < 0.05 * expect.max(1.0), "{t} {k} {d}: {m} vs {expect}");
        }
    }

    #[test]
    fn log2_sum() {
        let mut s = Log2Sum::new();
        for l in [3.0, 1.0, 5.0, f64::NEG_INFINITY] {
            s.add(l);
        }
        assert!((s.value() - (8.0f64 + 2.0 + 32.0).log2()).abs() < 1e-12);
        assert_eq!(Log2Sum::new().value(), f64::NEG_INFINITY);
    }

    #[test]
    fn group_counts_cover_all_sequences() {
        let setup = bsc_setup(0.1, 12, 0.1);
        let phi = setup.ntype().unwrap();
        let mut log2_fact = vec![0.0; 13];
        for i in 1..=12 {
            log2_fact[i] = log2_fact[i - 1] + (i as f64).log2();
        }
        let ctx = LazyContext {
            kx: 2,
            ky: 2,
            lw: vec![vec![(0.45f64).log2(), (0.05f64).log2()], vec![(0.05f64).log2(), (0.45f64).log2()]],
            log2_fact,
            log2_t: type_class_log_size(&phi),
            phi,
            p_bin: 0.25,
            p_msg: 0.5,
        };
        let t = ctx.table(&[5, 7]).unwrap();
        let total: f64 = t.groups.iter().map(|g| g.count).sum();
        assert_eq!(total, 4096.0);
        let in_t: f64 = t.type_groups.iter().map(|&i| t.groups[i].count).sum();
        assert_eq!(in_t, 924.0);
    }

    /// The lazy simulator draws the same error law as the literal one.
    #[test]
    fn lazy_matches_literal() {
        for (p, n, lm, lf) in [(0.1, 8u64, 1.0, 3.0), (0.2, 6, 2.0, 2.0), (0.05, 10, 3.0, 4.0), (0.15, 9, 0.0, 3.0)] {
            let s = bsc_setup(p, n, 0.1);
            let a = simulate_protocol(&s, lm, lf, 20_000, 5, SimMethod::Literal).unwrap();
            let b = simulate_protocol(&s, lm, lf, 20_000, 6, SimMethod::Lazy).unwrap();
            let tol = a.error.half_width + b.error.half_width + 1e-6;
            assert!((a.error.mean - b.error.mean).abs() <= tol, "{p} {n}: {:?} vs {:?}", a.error, b.error);
            assert!((a.encoder_failure - b.encoder_failure).abs() < 0.02);
        }
    }

    #[test]
    fn ternary_lazy_matches_literal() {
        let input = Pmf::from_probs("X", vec![1.0 / 3.0; 3]).unwrap();
        let rows = vec![vec![0.8, 0.1, 0.1], vec![0.1, 0.8, 0.1], vec![0.2, 0.2, 0.6]];
        let ch = Channel::from_matrix("X", "Y", rows).unwrap();
        let s = P2PSetup::new(input, ch, 6, 0.1).unwrap();
        let a = simulate_protocol(&s, 2.0, 3.0, 20_000, 7, SimMethod::Literal).unwrap();
        let b = simulate_protocol(&s, 2.0, 3.0, 20_000, 8, SimMethod::Lazy).unwrap();
        assert!((a.error.mean - b.error.mean).abs() <= a.error.half_width + b.error.half_width);
    }

    #[test]
    fn oversaturated_rate_fails() {
        let s = bsc_setup(0.05, 12, 0.1);
        let r = simulate_protocol(&s, 12.0, 2.0, 2000, 1, SimMethod::Lazy).unwrap();
        assert!(r.error.mean > 0.95);
        let l = simulate_protocol(&s, 12.0, 2.0, 2000, 1, SimMethod::Literal).unwrap();
        assert!(l.error.mean > 0.95);
    }

    #[test]
    fn reproducible() {
        let s = bsc_setup(0.1, 40, 0.1);
        let a = simulate_protocol(&s, 4.0, 20.0, 3000, 9, SimMethod::Auto).unwrap();
        let b = simulate_protocol(&s, 4.0, 20.0, 3000, 9, SimMethod::Auto).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.method, SimMethod::Lazy);
    }

    #[test]
    fn backed_off_rate_meets_target() {
        let s = bsc_setup(0.01, 200, 0.05);
        // 1/sqrt(200) exceeds eps, so the slack is absorbed
        let policy = LogTermPolicy::absorbed();
        let r = super::super::p2p_rate(&s, &policy).unwrap();
        assert!(r.rate > 0.4);
        let sim = p2p_simulate(&s, r.rate - 0.2, &policy, 2000, 3, SimMethod::Auto).unwrap();
        assert!(sim.error.mean + sim.error.half_width < 0.05, "{:?}", sim.error);
    }

    fn diag2() -> JointPmf {
        JointPmf::from_sizes(&["U", "X"], &[2, 2], vec![0.5, 0.0, 0.0, 0.5]).unwrap()
    }

    fn pair(py: f64, pz: f64) -> Channel {
        let (a, b) = (Channel::bsc(py).unwrap(), Channel::bsc(pz).unwrap());
        let rows: Vec<Vec<f64>> = (0..2)
            .map(|x| {
                let mut r = vec![0.0; 4];
                for y in 0..2 {
                    for z in 0..2 {
                        r[y * 2 + z] = a.transition(x, y) * b.transition(x, z);
                    }
                }
                r
            })
            .collect();
        Channel::new(
            Alphabet::new("X", 2).unwrap(),
            vec![Alphabet::new("Y", 2).unwrap(), Alphabet::new("Z", 2).unwrap()],
            rows,
        )
        .unwrap()
    }

    #[test]
    fn single_message_is_perfectly_secret() {
        let w = WiretapSetup::new(diag2(), pair(0.1, 0.3), 8, 0.9, 0.9, 0.5).unwrap();
        let policy = LogTermPolicy::absorbed();
        let r = wiretap_simulate_secrecy(&w, 0.0, &policy, 20, 2, 1).unwrap();
        assert_eq!(r.tv.mean, 0.0);
        assert_eq!(r.best_tv, 0.0);
    }

    #[test]
    fn constant_eavesdropper_sees_nothing() {
        let a = Channel::bsc(0.1).unwrap();
        let ch = Channel::new(
            Alphabet::new("X", 2).unwrap(),
            vec![Alphabet::new("Y", 2).unwrap(), Alphabet::new("Z", 1).unwrap()],
            a.rows().to_vec(),
        )
        .unwrap();
        let w = WiretapSetup::new(diag2(), ch, 8, 0.9, 0.9, 0.5).unwrap();
        let r = wiretap_simulate_secrecy(&w, 0.25, &LogTermPolicy::absorbed(), 20, 2, 1).unwrap();
        assert_eq!(r.log2_messages, 2.0);
        assert!(r.tv.mean.abs() < 1e-12);
    }

    #[test]
    fn leaky_eavesdropper_is_detected() {
        // a noiseless eavesdropper sees the codeword, so four messages leak
        let w = WiretapSetup::new(diag2(), pair(0.1, 0.0), 8, 0.9, 0.9, 0.5).unwrap();
        let r = wiretap_simulate_secrecy(&w, 0.25, &LogTermPolicy::absorbed(), 20, 2, 1).unwrap();
        assert!(r.tv.mean > 0.25, "{:?}", r.tv);
        assert!(r.best_tv <= r.tv.mean);
    }

    #[test]
    fn histogram_guard() {
        let w = WiretapSetup::new(diag2(), pair(0.1, 0.3), 30, 0.9, 0.9, 0.5).unwrap();
        assert!(matches!(
            wiretap_simulate_secrecy(&w, 0.0, &LogTermPolicy::absorbed(), 4, 1, 1),
            Err(Error::GuardExceeded { .. })
        ));
    }
}
