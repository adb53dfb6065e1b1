//! Pulsed-excitation photon Monte Carlo for a trapped cluster.
//!
//! Per excitation pulse the cluster receives a Poisson number of excitons with
//! mean `P/P_sat`. Excitons are reduced pairwise by Auger annihilation, each
//! surviving exciton radiates with the quantum yield, the emission is scaled by
//! the current blinking state, and every photon is detected with the chain's
//! overall efficiency and routed to one of two detectors by a 50/50 splitter.

use rand::Rng;
use rand_distr::{Distribution, Exp, Normal, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::{child_rng, SimRng};
use crate::units::Power;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EmitterError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

pub type Result<T> = std::result::Result<T, EmitterError>;

fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(EmitterError::InvalidParameter(msg.into()))
}

fn check_fraction(name: &str, v: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&v) {
        return invalid(format!("{name} must lie in [0, 1], got {v}"));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExcitationConfig {
    /// Pulse repetition rate, 1/s.
    pub repetition_rate: f64,
    /// Pulse length, s (informational).
    pub pulse_duration: f64,
    pub power: Power,
    pub p_sat: Power,
    /// One-sigma uncertainty of `p_sat`.
    pub p_sat_uncertainty: Power,
}

impl Default for ExcitationConfig {
    fn default() -> Self {
        ExcitationConfig {
            repetition_rate: 1e6,
            pulse_duration: 82e-9,
            power: Power::uw(2.0),
            p_sat: Power::uw(2.63),
            p_sat_uncertainty: Power::uw(0.43),
        }
    }
}

impl ExcitationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.repetition_rate > 0.0) || !self.repetition_rate.is_finite() {
            return invalid("repetition rate must be positive");
        }
        if !(self.power.0 >= 0.0) || !self.p_sat.is_finite_positive() {
            return invalid("excitation power must be non-negative and saturation power positive");
        }
        Ok(())
    }

    /// Mean excitons per pulse, `P/P_sat`.
    pub fn mean_excitons(&self) -> f64 {
        self.power / self.p_sat
    }

    pub fn pulse_period(&self) -> f64 {
        1.0 / self.repetition_rate
    }
}

/// Probability that a pair of excitons annihilates to one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case", deny_unknown_fields)]
pub enum AugerModel {
    Fixed { p: f64 },
    /// `p_A = p0·exp(−(N−1)/n0)`: Auger blockade weakens in larger clusters.
    ClusterScaled { p0: f64, n0: f64 },
}

impl Default for AugerModel {
    fn default() -> Self {
        AugerModel::Fixed { p: 1.0 }
    }
}

impl AugerModel {
    pub fn probability(&self, n_rods: u32) -> f64 {
        match *self {
            AugerModel::Fixed { p } => p,
            AugerModel::ClusterScaled { p0, n0 } => p0 * (-(n_rods as f64 - 1.0) / n0).exp(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum BlinkModel {
    AlwaysBright,
    /// Alternating bright and grey periods with exponential dwell times (s).
    TwoState {
        grey_attenuation: f64,
        bright_dwell: f64,
        grey_dwell: f64,
    },
    /// Mostly dark, with short bright bursts.
    DarkWithBursts { burst_dwell: f64, dark_dwell: f64 },
}

impl Default for BlinkModel {
    fn default() -> Self {
        BlinkModel::AlwaysBright
    }
}

impl BlinkModel {
    pub fn validate(&self) -> Result<()> {
        match *self {
            BlinkModel::AlwaysBright => Ok(()),
            BlinkModel::TwoState {
                grey_attenuation,
                bright_dwell,
                grey_dwell,
            } => {
                if !(grey_attenuation >= 1.0) {
                    return invalid("grey attenuation must be at least 1");
                }
                if !(bright_dwell > 0.0) || !(grey_dwell >= 0.0) {
                    return invalid("bright dwell must be positive and grey dwell non-negative");
                }
                Ok(())
            }
            BlinkModel::DarkWithBursts {
                burst_dwell,
                dark_dwell,
            } => {
                if !(burst_dwell > 0.0) || !(dark_dwell > 0.0) {
                    return invalid("burst and dark dwell times must be positive");
                }
                Ok(())
            }
        }
    }

    /// Long-time average emission factor.
    pub fn mean_factor(&self) -> f64 {
        match *self {
            BlinkModel::AlwaysBright => 1.0,
            BlinkModel::TwoState {
                grey_attenuation,
                bright_dwell,
                grey_dwell,
            } => (bright_dwell + grey_dwell / grey_attenuation) / (bright_dwell + grey_dwell),
            BlinkModel::DarkWithBursts {
                burst_dwell,
                dark_dwell,
            } => burst_dwell / (burst_dwell + dark_dwell),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmitterModel {
    pub n_rods: u32,
    pub quantum_yield: f64,
    pub auger: AugerModel,
    pub blink: BlinkModel,
}

impl Default for EmitterModel {
    fn default() -> Self {
        EmitterModel {
            n_rods: 1,
            quantum_yield: 0.7,
            auger: AugerModel::default(),
            blink: BlinkModel::default(),
        }
    }
}

impl EmitterModel {
    pub fn validate(&self) -> Result<()> {
        if self.n_rods == 0 {
            return invalid("n_rods must be at least 1");
        }
        check_fraction("quantum yield", self.quantum_yield)?;
        check_fraction("Auger probability", self.auger_probability())?;
        self.blink.validate()
    }

    pub fn auger_probability(&self) -> f64 {
        self.auger.probability(self.n_rods)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectionChain {
    pub apd_qe: f64,
    pub pm_reflectivity: f64,
    pub setup_transmission: f64,
    /// Linear-dipole fraction of the collected radiation.
    pub a_pi: f64,
    pub a_pi_uncertainty: f64,
    pub efficiency_linear: f64,
    pub efficiency_circular: f64,
    /// Fraction routed to detector 0.
    pub splitter_ratio: f64,
}

impl Default for DetectionChain {
    fn default() -> Self {
        DetectionChain {
            apd_qe: 0.69,
            pm_reflectivity: 0.72,
            setup_transmission: 0.83,
            a_pi: 0.31,
            a_pi_uncertainty: 0.03,
            efficiency_linear: 0.94,
            efficiency_circular: 0.76,
            splitter_ratio: 0.5,
        }
    }
}

impl DetectionChain {
    pub fn validate(&self) -> Result<()> {
        check_fraction("APD quantum efficiency", self.apd_qe)?;
        check_fraction("mirror reflectivity", self.pm_reflectivity)?;
        check_fraction("setup transmission", self.setup_transmission)?;
        check_fraction("a_pi", self.a_pi)?;
        check_fraction("linear collection efficiency", self.efficiency_linear)?;
        check_fraction("circular collection efficiency", self.efficiency_circular)?;
        check_fraction("splitter ratio", self.splitter_ratio)
    }

    /// `0.94·a_π + 0.76·(1 − a_π)` with the configured efficiencies.
    pub fn collection(&self) -> f64 {
        self.efficiency_linear * self.a_pi + self.efficiency_circular * (1.0 - self.a_pi)
    }

    /// Probability that an emitted photon produces a detector click.
    pub fn detection_probability(&self) -> f64 {
        self.collection() * self.pm_reflectivity * self.setup_transmission * self.apd_qe
    }
}

/// Poisson number of excitons for mean `mean = P/P_sat`.
pub fn excitons_per_pulse<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> u32 {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).map(|p| p.sample(rng) as u32).unwrap_or(0)
}

/// Pairwise Auger reduction of `k` excitons to radiating excitons.
///
/// While two or more excitons remain, one pair either annihilates into a
/// single exciton (probability `p_a`) or both members radiate.
pub fn auger_reduce<R: Rng + ?Sized>(k: u32, p_a: f64, rng: &mut R) -> u32 {
    let mut remaining = k;
    let mut photons = 0;
    while remaining >= 2 {
        if p_a >= 1.0 || (p_a > 0.0 && rng.random::<f64>() < p_a) {
            remaining -= 1;
        } else {
            photons += 2;
            remaining -= 2;
        }
    }
    photons + remaining
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlinkState {
    Bright,
    Grey,
    Dark,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlinkTrajectory {
    /// `(start time, state)`, starts strictly increasing, first at 0.
    pub segments: Vec<(f64, BlinkState)>,
    pub duration: f64,
    pub grey_attenuation: f64,
}

impl BlinkTrajectory {
    pub fn state_at(&self, t: f64) -> BlinkState {
        let i = self.segments.partition_point(|(s, _)| *s <= t);
        self.segments[i.saturating_sub(1)].1
    }

    pub fn factor(&self, state: BlinkState) -> f64 {
        match state {
            BlinkState::Bright => 1.0,
            BlinkState::Grey => 1.0 / self.grey_attenuation,
            BlinkState::Dark => 0.0,
        }
    }

    pub fn factor_at(&self, t: f64) -> f64 {
        self.factor(self.state_at(t))
    }

    /// Time spent in `state` within the trajectory.
    pub fn occupancy(&self, state: BlinkState) -> f64 {
        let mut total = 0.0;
        for (i, (start, s)) in self.segments.iter().enumerate() {
            let end = self.segments.get(i + 1).map_or(self.duration, |n| n.0);
            if *s == state {
                total += end - start;
            }
        }
        total
    }
}

/// Piecewise-constant blinking trajectory with exponential dwell times.
pub fn blink_trajectory<R: Rng + ?Sized>(duration: f64, model: &BlinkModel, rng: &mut R) -> BlinkTrajectory {
    let (states, dwell, g) = match *model {
        BlinkModel::AlwaysBright => ([BlinkState::Bright, BlinkState::Bright], [0.0, 0.0], 1.0),
        BlinkModel::TwoState {
            grey_attenuation,
            bright_dwell,
            grey_dwell,
        } => (
            [BlinkState::Bright, BlinkState::Grey],
            [bright_dwell, grey_dwell],
            grey_attenuation,
        ),
        BlinkModel::DarkWithBursts {
            burst_dwell,
            dark_dwell,
        } => ([BlinkState::Bright, BlinkState::Dark], [burst_dwell, dark_dwell], 1.0),
    };
    let single = |s| BlinkTrajectory {
        segments: vec![(0.0, s)],
        duration,
        grey_attenuation: g,
    };
    if dwell[1] <= 0.0 || dwell[0] <= 0.0 {
        return single(if dwell[0] > 0.0 || dwell[1] <= 0.0 { states[0] } else { states[1] });
    }
    // stationary start
    let mut which = if rng.random::<f64>() < dwell[0] / (dwell[0] + dwell[1]) { 0 } else { 1 };
    let exps = [Exp::new(1.0 / dwell[0]).unwrap(), Exp::new(1.0 / dwell[1]).unwrap()];
    let mut t = 0.0;
    let mut segments = Vec::new();
    while t < duration {
        segments.push((t, states[which]));
        t += exps[which].sample(rng);
        which = 1 - which;
    }
    BlinkTrajectory {
        segments,
        duration,
        grey_attenuation: g,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeTag {
    pub channel: u8,
    /// Seconds since the start of the acquisition.
    pub time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeTagStream {
    pub events: Vec<TimeTag>,
    pub duration: f64,
    pub seed: u64,
}

fn sort_tags(events: &mut [TimeTag]) {
    events.sort_by(|a, b| a.time.total_cmp(&b.time).then(a.channel.cmp(&b.channel)));
}

impl TimeTagStream {
    pub fn new(mut events: Vec<TimeTag>, duration: f64, seed: u64) -> Self {
        sort_tags(&mut events);
        TimeTagStream {
            events,
            duration,
            seed,
        }
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn channel_count(&self, channel: u8) -> usize {
        self.events.iter().filter(|e| e.channel == channel).count()
    }

    pub fn mean_rate(&self) -> f64 {
        self.events.len() as f64 / self.duration
    }

    /// Timestamps non-decreasing and inside `[0, duration]`.
    pub fn is_well_formed(&self) -> bool {
        self.events.windows(2).all(|w| w[0].time <= w[1].time)
            && self.events.iter().all(|e| e.time >= 0.0 && e.time <= self.duration)
    }

    /// Union of several acquisitions over the same window.
    pub fn merge(streams: &[&TimeTagStream]) -> TimeTagStream {
        let duration = streams.iter().map(|s| s.duration).fold(0.0, f64::max);
        let events = streams.iter().flat_map(|s| s.events.iter().copied()).collect();
        TimeTagStream::new(events, duration, streams.first().map_or(0, |s| s.seed))
    }

    pub fn shifted(&self, dt: f64) -> TimeTagStream {
        TimeTagStream {
            events: self
                .events
                .iter()
                .map(|e| TimeTag {
                    channel: e.channel,
                    time: e.time + dt,
                })
                .collect(),
            duration: self.duration + dt.max(0.0),
            seed: self.seed,
        }
    }

    pub fn swapped_channels(&self) -> TimeTagStream {
        let events = self
            .events
            .iter()
            .map(|e| TimeTag {
                channel: 1 - e.channel.min(1),
                time: e.time,
            })
            .collect();
        TimeTagStream::new(events, self.duration, self.seed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TagOptions {
    /// Gaussian timing jitter (s) added to each click; zero disables it.
    pub jitter: f64,
    /// Pulses simulated per independent worker chunk.
    pub chunk_pulses: u64,
}

impl Default for TagOptions {
    fn default() -> Self {
        TagOptions {
            jitter: 0.0,
            chunk_pulses: 1 << 18,
        }
    }
}

/// Simulate a two-detector acquisition of `duration` seconds.
pub fn generate_time_tags(
    excitation: &ExcitationConfig,
    emitter: &EmitterModel,
    chain: &DetectionChain,
    duration: f64,
    seed: u64,
) -> Result<TimeTagStream> {
    generate_time_tags_with(excitation, emitter, chain, duration, seed, &TagOptions::default())
}

pub fn generate_time_tags_with(
    excitation: &ExcitationConfig,
    emitter: &EmitterModel,
    chain: &DetectionChain,
    duration: f64,
    seed: u64,
    opts: &TagOptions,
) -> Result<TimeTagStream> {
    excitation.validate()?;
    emitter.validate()?;
    chain.validate()?;
    if !(duration > 0.0) || !duration.is_finite() {
        return invalid("duration must be positive");
    }
    if opts.chunk_pulses == 0 || !(opts.jitter >= 0.0) {
        return invalid("chunk size must be positive and jitter non-negative");
    }
    let trajectory = blink_trajectory(duration, &emitter.blink, &mut child_rng(seed, "emitter.blink", 0));
    let n_pulses = (duration * excitation.repetition_rate).floor() as u64;
    let n_chunks = n_pulses.div_ceil(opts.chunk_pulses);
    let mean = excitation.mean_excitons();
    let p_a = emitter.auger_probability();
    let per_photon = emitter.quantum_yield * chain.detection_probability();
    let period = excitation.pulse_period();

    let chunks: Vec<Vec<TimeTag>> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = child_rng(seed, "emitter.pulses", c);
            let jitter = (opts.jitter > 0.0).then(|| Normal::new(0.0, opts.jitter).unwrap());
            let start = c * opts.chunk_pulses;
            let end = (start + opts.chunk_pulses).min(n_pulses);
            let mut out = Vec::new();
            for i in start..end {
                let t = i as f64 * period;
                let k = excitons_per_pulse(mean, &mut rng);
                if k == 0 {
                    continue;
                }
                let n = auger_reduce(k, p_a, &mut rng);
                let p = per_photon * trajectory.factor_at(t);
                for _ in 0..n {
                    if rng.random::<f64>() < p {
                        let channel = if rng.random::<f64>() < chain.splitter_ratio { 0 } else { 1 };
                        let time = match &jitter {
                            Some(j) => (t + j.sample(&mut rng)).clamp(0.0, duration),
                            None => t,
                        };
                        out.push(TimeTag { channel, time });
                    }
                }
            }
            out
        })
        .collect();
    let events: Vec<TimeTag> = chunks.into_iter().flatten().collect();
    Ok(TimeTagStream::new(events, duration, seed))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateEstimate {
    /// Detected photons per second.
    pub rate: f64,
    /// First-order uncertainty from `P_sat` and `a_π`.
    pub uncertainty: f64,
}

/// Closed-form detected rate
/// `γ_exc·Q_APD·T·R_PM·[1−exp(−P/P_sat)]·Q·[η_π·a_π + η_σ·(1−a_π)]`.
///
/// This assumes at most one photon per pulse (complete Auger blockade) and an
/// always-bright emitter.
pub fn expected_count_rate(
    excitation: &ExcitationConfig,
    emitter: &EmitterModel,
    chain: &DetectionChain,
) -> RateEstimate {
    let x = excitation.mean_excitons();
    let sat = 1.0 - (-x).exp();
    let prefactor = excitation.repetition_rate
        * chain.apd_qe
        * chain.setup_transmission
        * chain.pm_reflectivity
        * emitter.quantum_yield;
    let coll = chain.collection();
    let rate = prefactor * sat * coll;
    // d sat / d P_sat = −e^{−x}·x/P_sat
    let d_psat = prefactor * coll * (-(-x).exp() * x / excitation.p_sat.0);
    let d_api = prefactor * sat * (chain.efficiency_linear - chain.efficiency_circular);
    let uncertainty = ((d_psat * excitation.p_sat_uncertainty.0).powi(2)
        + (d_api * chain.a_pi_uncertainty).powi(2))
    .sqrt();
    RateEstimate { rate, uncertainty }
}

/// Exact g²(0) of the emitted photon number per pulse, `⟨n(n−1)⟩/⟨n⟩²`,
/// for Poisson excitation of mean `mean` followed by pairwise Auger reduction.
/// Quantum yield, detection losses and the splitter leave it unchanged.
pub fn expected_g2(mean: f64, p_a: f64) -> f64 {
    if mean <= 0.0 {
        return 0.0;
    }
    let k_max = (mean + 12.0 * mean.sqrt() + 20.0).ceil() as usize;
    // dist[j][n]: probability that j excitons leave n radiating
    let mut dist: Vec<Vec<f64>> = Vec::with_capacity(k_max + 1);
    let (mut m1, mut m2) = (0.0, 0.0);
    let mut pk = (-mean).exp();
    for j in 0..=k_max {
        if j > 0 {
            pk *= mean / j as f64;
        }
        let mut d = vec![0.0; j + 1];
        if j < 2 {
            d[j] = 1.0;
        } else {
            for (n, p) in dist[j - 1].iter().enumerate() {
                d[n] += p_a * p;
            }
            for (n, p) in dist[j - 2].iter().enumerate() {
                d[n + 2] += (1.0 - p_a) * p;
            }
        }
        for (n, p) in d.iter().enumerate() {
            let n = n as f64;
            m1 += pk * p * n;
            m2 += pk * p * n * (n - 1.0);
        }
        dist.push(d);
    }
    m2 / (m1 * m1)
}

/// Single-pulse helper exposing the per-pulse chain, used by tests and
/// diagnostics. Returns `(excitons, emitted photons)`.
pub fn simulate_pulse(mean: f64, p_a: f64, quantum_yield: f64, rng: &mut SimRng) -> (u32, u32) {
    let k = excitons_per_pulse(mean, rng);
    let n = auger_reduce(k, p_a, rng);
    let emitted = (0..n).filter(|_| rng.random::<f64>() < quantum_yield).count() as u32;
    (k, emitted)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;

    #[test]
    fn zero_power_gives_no_excitons() {
        let mut rng = rng_from_seed(1);
        assert!((0..1000).all(|_| excitons_per_pulse(0.0, &mut rng) == 0));
    }

    #[test]
    fn expected_g2_limits() {
        assert_eq!(expected_g2(0.76, 1.0), 0.0);
        assert!((expected_g2(0.76, 0.0) - 1.0).abs() < 1e-12);
        assert!((expected_g2(0.76, 0.9) - 0.2075).abs() < 5e-4);
    }

    #[test]
    fn auger_limits() {
        let mut rng = rng_from_seed(2);
        for k in 0..12 {
            assert_eq!(auger_reduce(k, 1.0, &mut rng), k.min(1));
            assert_eq!(auger_reduce(k, 0.0, &mut rng), k);
            assert!(auger_reduce(k, 0.5, &mut rng) <= k);
        }
    }

    #[test]
    fn always_bright_when_grey_dwell_vanishes() {
        let model = BlinkModel::TwoState {
            grey_attenuation: 3.0,
            bright_dwell: 1e-3,
            grey_dwell: 0.0,
        };
        let t = blink_trajectory(1.0, &model, &mut rng_from_seed(3));
        assert_eq!(t.segments.len(), 1);
        assert_eq!(t.state_at(0.7), BlinkState::Bright);
    }

    #[test]
    fn occupancy_matches_dwell_ratio() {
        let model = BlinkModel::TwoState {
            grey_attenuation: 3.0,
            bright_dwell: 1e-3,
            grey_dwell: 4e-3,
        };
        let t = blink_trajectory(200.0, &model, &mut rng_from_seed(4));
        let grey = t.occupancy(BlinkState::Grey) / 200.0;
        assert!((grey - 0.8).abs() < 0.01, "{grey}");
        assert!((model.mean_factor() - (0.2 + 0.8 / 3.0)).abs() < 1e-12);
    }

    #[test]
    fn dead_chain_gives_empty_stream() {
        let chain = DetectionChain {
            apd_qe: 0.0,
            ..DetectionChain::default()
        };
        let s = generate_time_tags(&ExcitationConfig::default(), &EmitterModel::default(), &chain, 0.05, 1).unwrap();
        assert!(s.is_empty());
        let dark = EmitterModel {
            quantum_yield: 0.0,
            ..EmitterModel::default()
        };
        let s = generate_time_tags(&ExcitationConfig::default(), &dark, &DetectionChain::default(), 0.05, 1).unwrap();
        assert!(s.is_empty());
    }

    #[test]
    fn default_rate_closed_form() {
        let r = expected_count_rate(&ExcitationConfig::default(), &EmitterModel::default(), &DetectionChain::default());
        assert!((r.rate - 125e3).abs() < 1e3, "{}", r.rate);
        assert!((r.uncertainty - 14e3).abs() < 1e3, "{}", r.uncertainty);
    }

    #[test]
    fn ideal_chain_saturated_rate() {
        let chain = DetectionChain {
            apd_qe: 1.0,
            pm_reflectivity: 1.0,
            setup_transmission: 1.0,
            a_pi: 1.0,
            ..DetectionChain::default()
        };
        let em = EmitterModel {
            quantum_yield: 1.0,
            ..EmitterModel::default()
        };
        let ex = ExcitationConfig {
            power: Power(1.0),
            ..ExcitationConfig::default()
        };
        let r = expected_count_rate(&ex, &em, &chain);
        assert!((r.rate - 1e6 * 0.94).abs() < 1e-6);
    }

    #[test]
    fn cluster_scaled_auger() {
        let m = AugerModel::ClusterScaled { p0: 0.95, n0: 40.0 };
        assert!((m.probability(1) - 0.95).abs() < 1e-15);
        assert!(m.probability(30) < m.probability(4));
    }
}
