//! Executes a parsed configuration, one sweep point at a time.
//!
//! Sweep points run in order on the coordinator; Monte Carlo inside a point
//! uses the worker pool. Each point's stream is `derive_seed(seed, index)`,
//! recorded in the row as `mc_seed`.

use std::io::Write;

use osrb_core::binning::{exact_expected_tv, mc_expected_tv, thm1_bound, BinningSpec, SGamma1Params};
use osrb_core::gaussian::quadrant_directions;
use osrb_core::prob::{Channel, JointPmf, Pmf};
use osrb_core::rng::derive_seed;
use osrb_core::secondorder::{
    p2p_rate, p2p_simulate, wiretap_rate, wiretap_simulate_secrecy, BCSetup, BcRegion, P2PSetup, WiretapSetup,
};
use osrb_core::slc::{exact_expected_correct, mc_error_prob, thm2_lower_bound, thm2_upper_bound, SGamma2Params};
use osrb_core::sweep::{standard_sweep, t_joint_for, t_z_for, SweepInstance, TChoice, TzChoice, TZ_CHOICES, T_CHOICES};

use crate::config::{
    BcPayload, P2pPayload, Payload, TSel, Thm1Payload, Thm2Payload, TzSel, WiretapPayload,
};
use crate::output::{Row, Sink};
use crate::CliError;

/// Columns every row starts with.
pub struct RunMeta {
    pub hash: String,
    pub seed: u64,
}

impl RunMeta {
    fn row(&self) -> Row {
        Row::new().set("config_hash", self.hash.as_str()).set("seed", self.seed)
    }
}

pub fn execute<W: Write>(payload: &Payload, meta: &RunMeta, sink: &mut Sink<W>) -> Result<(), CliError> {
    match payload {
        Payload::Thm1(p) => thm1(p, meta, sink),
        Payload::Thm2(p) => thm2(p, meta, sink),
        Payload::P2p(p) => p2p(p, meta, sink),
        Payload::Bc(p) => bc(p, meta, sink),
        Payload::Wiretap(p) => wiretap(p, meta, sink),
    }
}

pub(crate) fn instances(
    source: &Option<osrb_core::prob::json::JointJson>,
    spec: &Option<Vec<[usize; 2]>>,
    sweep: Option<usize>,
    seed: u64,
) -> Result<Vec<SweepInstance>, CliError> {
    match (source, spec, sweep) {
        (None, None, Some(k)) if k >= 1 => Ok(standard_sweep(seed, k)?),
        (Some(src), Some(spec), None) => {
            let pairs: Vec<(usize, usize)> = spec.iter().map(|p| (p[0], p[1])).collect();
            Ok(vec![SweepInstance {
                id: 0,
                source: src.to_joint()?,
                spec: BinningSpec::from_sizes(&pairs)?,
            }])
        }
        _ => Err(CliError::Schema(
            "give either `source` with `spec`, or `standard_sweep` >= 1".into(),
        )),
    }
}

fn check_trials(trials: u64) -> Result<(), CliError> {
    if trials == 1 {
        return Err(CliError::Schema("`trials` must be 0 (no Monte Carlo) or at least 2".into()));
    }
    Ok(())
}

pub(crate) fn tz_choices(sel: &[TzSel]) -> Result<Vec<(String, Option<TzChoice>, Option<Vec<f64>>)>, CliError> {
    if sel.is_empty() {
        return Ok(TZ_CHOICES.iter().map(|&c| (tz_name(c).to_string(), Some(c), None)).collect());
    }
    sel.iter()
        .map(|s| match s {
            TzSel::Named(n) if n == "marginal" => Ok((n.clone(), Some(TzChoice::Marginal), None)),
            TzSel::Named(n) if n == "uniform" => Ok((n.clone(), Some(TzChoice::Uniform), None)),
            TzSel::Named(n) => Err(CliError::Schema(format!("unknown t_z choice `{n}`"))),
            TzSel::Probs(p) => Ok(("explicit".to_string(), None, Some(p.clone()))),
        })
        .collect()
}

fn tz_name(c: TzChoice) -> &'static str {
    match c {
        TzChoice::Marginal => "marginal",
        TzChoice::Uniform => "uniform",
    }
}

fn t_name(c: TChoice) -> &'static str {
    match c {
        TChoice::Match => "match",
        TChoice::IidMarginals => "iid_marginals",
        TChoice::Uniform => "uniform",
    }
}

pub(crate) fn t_choices(sel: &[TSel]) -> Result<Vec<(String, Option<TChoice>, Option<JointPmf>)>, CliError> {
    if sel.is_empty() {
        return Ok(T_CHOICES.iter().map(|&c| (t_name(c).to_string(), Some(c), None)).collect());
    }
    sel.iter()
        .map(|s| match s {
            TSel::Named(n) => T_CHOICES
                .iter()
                .find(|&&c| t_name(c) == n)
                .map(|&c| (n.clone(), Some(c), None))
                .ok_or_else(|| CliError::Schema(format!("unknown t_joint choice `{n}`"))),
            TSel::Joint(j) => Ok(("explicit".to_string(), None, Some(j.to_joint()?))),
        })
        .collect()
}

fn spec_label(spec: &BinningSpec) -> String {
    spec.parts()
        .iter()
        .map(|(a, m)| format!("{}:{}", a.size(), m))
        .collect::<Vec<_>>()
        .join(" ")
}

fn thm1<W: Write>(p: &Thm1Payload, meta: &RunMeta, sink: &mut Sink<W>) -> Result<(), CliError> {
    check_trials(p.trials)?;
    let insts = instances(&p.source, &p.spec, p.standard_sweep, meta.seed)?;
    let choices = tz_choices(&p.t_z)?;
    for inst in &insts {
        let exact = exact_expected_tv(&inst.source, &inst.spec)?;
        let mc_seed = derive_seed(meta.seed, inst.id as u64);
        let mc = if p.trials >= 2 {
            Some(mc_expected_tv(&inst.source, &inst.spec, p.trials, mc_seed)?)
        } else {
            None
        };
        let k = inst.spec.num_parts();
        for (label, choice, probs) in &choices {
            let t_z = match (choice, probs) {
                (Some(c), _) => t_z_for(inst, *c),
                (None, Some(v)) => Pmf::new(inst.source.axes()[k].clone(), v.clone())?,
                _ => unreachable!(),
            };
            for &gamma in &p.gamma_grid {
                let params = SGamma1Params::new(inst.source.clone(), t_z.clone(), inst.spec.clone(), gamma)?
                    .with_exponent(p.exponent);
                let bound = thm1_bound(&params);
                sink.write(
                    &meta
                        .row()
                        .set("instance", inst.id)
                        .set("spec", spec_label(&inst.spec))
                        .set("t_z", label.as_str())
                        .set("gamma", gamma)
                        .set("bound", bound)
                        .set("exact_tv", exact)
                        .set("mc_tv", mc.as_ref().map(|m| m.mean))
                        .set("mc_halfwidth", mc.as_ref().map(|m| m.half_width))
                        .set("mc_seed", mc_seed)
                        .set("holds", exact <= bound + 1e-12),
                )?;
            }
        }
    }
    Ok(())
}

fn thm2<W: Write>(p: &Thm2Payload, meta: &RunMeta, sink: &mut Sink<W>) -> Result<(), CliError> {
    check_trials(p.trials)?;
    let insts = instances(&p.source, &p.spec, p.standard_sweep, meta.seed)?;
    let choices = t_choices(&p.t_joint)?;
    for inst in &insts {
        let axis_names: Vec<&str> = inst.source.axes().iter().map(|a| a.name()).collect();
        for (ci, (label, choice, explicit)) in choices.iter().enumerate() {
            let t = match (choice, explicit) {
                (Some(c), _) => t_joint_for(inst, *c)?,
                (None, Some(j)) => j.relabeled(&axis_names)?,
                _ => unreachable!(),
            };
            let exact = exact_expected_correct(&inst.source, &t, &inst.spec)?;
            let lower = thm2_lower_bound(&inst.source, &t, &inst.spec)?;
            let mc_seed = derive_seed(meta.seed, (inst.id * choices.len() + ci) as u64);
            let mc = if p.trials >= 2 {
                Some(mc_error_prob(&inst.source, &t, &inst.spec, p.trials, mc_seed)?)
            } else {
                None
            };
            for &gamma in &p.gamma_grid {
                let params = SGamma2Params::new(t.clone(), inst.spec.clone(), gamma)?.with_form(p.form);
                let upper = thm2_upper_bound(&inst.source, &params)?;
                sink.write(
                    &meta
                        .row()
                        .set("instance", inst.id)
                        .set("spec", spec_label(&inst.spec))
                        .set("t_joint", label.as_str())
                        .set("gamma", gamma)
                        .set("lower_bound", lower)
                        .set("exact_correct", exact)
                        .set("upper_bound", upper)
                        .set("mc_error", mc.as_ref().map(|m| m.mean))
                        .set("mc_halfwidth", mc.as_ref().map(|m| m.half_width))
                        .set("mc_seed", mc_seed)
                        .set("holds", lower <= exact + 1e-12 && 1.0 - exact <= upper + 1e-12),
                )?;
            }
        }
    }
    Ok(())
}

pub(crate) fn p2p_base(p: &P2pPayload, n: u64) -> Result<P2PSetup, CliError> {
    let input = Pmf::from_probs("X", p.input.clone())?;
    let ch: Channel = p.channel.to_channel()?.with_names("X", &["Y"])?;
    Ok(P2PSetup::new(input, ch, n, p.eps)?)
}

fn p2p<W: Write>(p: &P2pPayload, meta: &RunMeta, sink: &mut Sink<W>) -> Result<(), CliError> {
    for (i, &n) in p.n_grid.iter().enumerate() {
        let setup = p2p_base(p, n)?;
        let r = p2p_rate(&setup, &p.policy)?;
        let mut row = meta
            .row()
            .set("n", n)
            .set("eps", p.eps)
            .set("rate", r.rate)
            .set("unclamped", r.unclamped)
            .set("clamped", r.clamped)
            .set("information", r.component("information"))
            .set("dispersion_term", r.dispersion_term)
            .set("log_term", r.log_term);
        if let Some(sim) = &p.simulate {
            let rate = (r.rate - sim.backoff).max(0.0);
            let mc_seed = derive_seed(meta.seed, i as u64);
            let rep = p2p_simulate(&setup, rate, &p.policy, sim.trials, mc_seed, sim.method)?;
            row = row
                .set("sim_rate", rate)
                .set("sim_error", rep.error.mean)
                .set("sim_halfwidth", rep.error.half_width)
                .set("sim_encoder_failure", rep.encoder_failure)
                .set("sim_log2_messages", rep.log2_messages)
                .set("sim_log2_bins", rep.log2_bins)
                .set("sim_method", format!("{:?}", rep.method).to_lowercase())
                .set("mc_seed", mc_seed);
        }
        sink.write(&row.with_components(&r.components))?;
    }
    Ok(())
}

pub(crate) fn bc_setup(p: &BcPayload) -> Result<BCSetup, CliError> {
    let q = p.q_u1u2x.to_joint()?;
    let ch = p.channel.to_channel()?;
    Ok(BCSetup::new(q, ch, p.n, p.eps)?)
}

fn bc<W: Write>(p: &BcPayload, meta: &RunMeta, sink: &mut Sink<W>) -> Result<(), CliError> {
    if p.directions < 2 {
        return Err(CliError::Schema("`directions` must be at least 2".into()));
    }
    let setup = bc_setup(p)?;
    let region = BcRegion::new(&setup, &p.policy, p.search)?;
    let limit = setup.marton_limit()?;
    let dirs = quadrant_directions(p.directions);
    let pts = region.boundary(&dirs)?;
    for (i, (d, b)) in dirs.iter().zip(&pts).enumerate() {
        sink.write(
            &meta
                .row()
                .set("n", p.n)
                .set("eps", p.eps)
                .set("direction", i)
                .set("d1", d[0])
                .set("d2", d[1])
                .set("r1", b[0])
                .set("r2", b[1])
                .set("limit_r1", limit[0])
                .set("limit_r2", limit[1])
                .set("limit_sum", limit[2]),
        )?;
    }
    Ok(())
}

pub(crate) fn wiretap_setup(p: &WiretapPayload, n: u64, theta: f64) -> Result<WiretapSetup, CliError> {
    let q = p.q_ux.to_joint()?;
    let ch = p.channel.to_channel()?;
    Ok(WiretapSetup::new(q, ch, n, p.eps_r, p.eps_sec, theta)?.with_conditioning(p.conditioning))
}

fn wiretap<W: Write>(p: &WiretapPayload, meta: &RunMeta, sink: &mut Sink<W>) -> Result<(), CliError> {
    let mut index = 0u64;
    for &n in &p.n_grid {
        for &theta in &p.theta_grid {
            let setup = wiretap_setup(p, n, theta)?;
            let r = wiretap_rate(&setup, &p.policy)?;
            let mut row = meta
                .row()
                .set("n", n)
                .set("theta", theta)
                .set("eps_r", p.eps_r)
                .set("eps_sec", p.eps_sec)
                .set("rate", r.rate)
                .set("unclamped", r.unclamped)
                .set("clamped", r.clamped)
                .set("information", r.component("information"))
                .set("dispersion_term", r.dispersion_term)
                .set("log_term", r.log_term);
            if let Some(sim) = &p.simulate {
                let rate = (r.rate - sim.backoff).max(0.0);
                let mc_seed = derive_seed(meta.seed, index);
                let rep = wiretap_simulate_secrecy(&setup, rate, &p.policy, sim.scan, sim.decode_draws, mc_seed)?;
                row = row
                    .set("sim_rate", rate)
                    .set("sim_tv", rep.tv.mean)
                    .set("sim_tv_halfwidth", rep.tv.half_width)
                    .set("sim_best_tv", rep.best_tv)
                    .set("sim_error", rep.error.mean)
                    .set("sim_error_halfwidth", rep.error.half_width)
                    .set("sim_bias_bound", rep.bias_bound)
                    .set("sim_scan", rep.scan_size)
                    .set("mc_seed", mc_seed);
            }
            sink.write(&row.with_components(&r.components))?;
            index += 1;
        }
    }
    Ok(())
}
