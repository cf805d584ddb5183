//! Load-duration-curve scenario generation.
//!
//! A year's load duration curve is approximated by piecewise-constant
//! segments (weight in percent of the year, loading level, relative spread).
//! Each segment spawns Gaussian load samples around the re-scaled base case;
//! multi-year sets apply a compound annual growth factor. Segments whose
//! samples are all uncongested collapse to a single representative scenario
//! carrying the segment's whole probability mass.

use crate::acpf::{self, DispatchSpec, Loads, PfConfig, SystemState};
use crate::grid::Network;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};

/// One piecewise-constant segment of a load duration curve.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LdSegment {
    pub index: usize,
    /// percent of the year covered by this segment
    pub weight: f64,
    pub alpha_lo: f64,
    pub alpha_hi: f64,
    /// loading level: midpoint of [alpha_lo, alpha_hi]
    pub alpha: f64,
    /// relative standard deviation of the load samples
    pub sigma: f64,
}

impl LdSegment {
    pub fn new(index: usize, weight: f64, alpha: f64, sigma: f64) -> LdSegment {
        // bounds chosen symmetric so that alpha is the midpoint and
        // (alpha_hi − alpha)/alpha = sigma
        LdSegment {
            index,
            weight,
            alpha_lo: alpha * (1.0 - sigma),
            alpha_hi: alpha * (1.0 + sigma),
            alpha,
            sigma,
        }
    }
}

/// The reference 6-segment LD table (weights %, loading level, spread).
pub fn default_ld_table() -> Vec<LdSegment> {
    [
        (5.50, 0.940, 0.064),
        (19.50, 0.845, 0.041),
        (25.00, 0.775, 0.045),
        (25.00, 0.685, 0.080),
        (18.80, 0.590, 0.068),
        (6.20, 0.51, 0.078),
    ]
    .iter()
    .enumerate()
    .map(|(i, &(w, a, s))| LdSegment::new(i + 1, w, a, s))
    .collect()
}

/// A sampled loading configuration with its occurrence weight.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Scenario {
    pub p_load: Vec<f64>,
    pub q_load: Vec<f64>,
    pub probability: f64,
    pub hours_per_year: f64,
    pub year: u32,
    pub segment: usize,
    pub seed_tag: String,
}

impl Scenario {
    /// Single scenario at the network's own loads (probability 1).
    pub fn base_case(net: &Network) -> Scenario {
        Scenario {
            p_load: net.pu.p_load.clone(),
            q_load: net.pu.q_load.clone(),
            probability: 1.0,
            hours_per_year: 8760.0,
            year: 0,
            segment: 0,
            seed_tag: "base".into(),
        }
    }

    pub fn loads(&self) -> Loads {
        Loads { p: self.p_load.clone(), q: self.q_load.clone() }
    }

    pub fn total_p(&self) -> f64 {
        self.p_load.iter().sum()
    }
}

fn scenario_rng(seed: u64, year: u32, segment: usize, sample: usize) -> ChaCha8Rng {
    // splittable stream: one independent generator per (seed, year, segment,
    // sample); elements are drawn sequentially within it
    let mut key = seed;
    for w in [year as u64 + 1, segment as u64 + 1, sample as u64 + 1] {
        key ^= w.wrapping_mul(0x9e37_79b9_7f4a_7c15);
        key = key.wrapping_mul(0xbf58_476d_1ce4_e5b9);
        key ^= key >> 31;
    }
    ChaCha8Rng::seed_from_u64(key)
}

fn clamp_like(base: f64, sample: f64) -> f64 {
    if base >= 0.0 {
        sample.max(0.0)
    } else {
        sample.min(0.0)
    }
}

/// The deterministic (noise-free) representative scenario of a segment.
pub fn segment_base_scenario(
    net: &Network,
    seg: &LdSegment,
    growth: f64,
    year: u32,
) -> Scenario {
    let scale = seg.alpha * (1.0 + growth).powi(year as i32);
    Scenario {
        p_load: net.pu.p_load.iter().map(|&l| l * scale).collect(),
        q_load: net.pu.q_load.iter().map(|&l| l * scale).collect(),
        probability: seg.weight / 100.0,
        hours_per_year: 8760.0 * seg.weight / 100.0,
        year,
        segment: seg.index,
        seed_tag: format!("base/y{}/g{}", year, seg.index),
    }
}

/// Draw `n_i` Gaussian load samples for one segment of year `year`.
/// Element-wise: load = base + N(0, σ·base), clamped to keep its sign,
/// where base = α_i·(1+growth)^year·(case load).
pub fn sample_segment(
    net: &Network,
    seg: &LdSegment,
    n_i: usize,
    growth: f64,
    year: u32,
    seed: u64,
) -> Vec<Scenario> {
    assert!(n_i >= 1, "segment needs at least one sample");
    let scale = seg.alpha * (1.0 + growth).powi(year as i32);
    let base_p: Vec<f64> = net.pu.p_load.iter().map(|&l| l * scale).collect();
    let base_q: Vec<f64> = net.pu.q_load.iter().map(|&l| l * scale).collect();
    let mut out = Vec::with_capacity(n_i);
    for k in 0..n_i {
        let mut rng = scenario_rng(seed, year, seg.index, k);
        let mut draw = |base: &[f64]| -> Vec<f64> {
            base.iter()
                .map(|&b| {
                    if seg.sigma == 0.0 || b == 0.0 {
                        b
                    } else {
                        let n = Normal::new(0.0, seg.sigma * b.abs()).unwrap();
                        clamp_like(b, b + n.sample(&mut rng))
                    }
                })
                .collect()
        };
        let p_load = draw(&base_p);
        let q_load = draw(&base_q);
        out.push(Scenario {
            p_load,
            q_load,
            probability: seg.weight / (100.0 * n_i as f64),
            hours_per_year: 8760.0 * seg.weight / (100.0 * n_i as f64),
            year,
            segment: seg.index,
            seed_tag: format!("s{}/y{}/g{}/k{}", seed, year, seg.index, k),
        })
    }
    out
}

/// Split a yearly sample budget over segments proportionally to their
/// weights (largest remainder, at least one per segment).
pub fn allocate_counts(table: &[LdSegment], per_year: usize) -> Vec<usize> {
    let m = table.len();
    assert!(per_year >= m, "need at least one sample per segment");
    let mut counts: Vec<usize> = Vec::with_capacity(m);
    let mut rema: Vec<(usize, f64)> = Vec::with_capacity(m);
    let mut used = 0usize;
    for (i, seg) in table.iter().enumerate() {
        let exact = seg.weight / 100.0 * per_year as f64;
        let fl = (exact.floor() as usize).max(1);
        counts.push(fl);
        used += fl;
        rema.push((i, exact - exact.floor()));
    }
    // distribute the remainder deterministically by largest fraction
    rema.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    let mut idx = 0;
    while used < per_year {
        counts[rema[idx % m].0] += 1;
        used += 1;
        idx += 1;
    }
    while used > per_year {
        for &(i, _) in rema.iter().rev() {
            if counts[i] > 1 && used > per_year {
                counts[i] -= 1;
                used -= 1;
            }
        }
    }
    counts
}

/// Full multi-year scenario set: years `0..years` each get a sampled set of
/// `per_year` scenarios, with loads grown by `(1+growth)^year`.
pub fn sample_years(
    net: &Network,
    table: &[LdSegment],
    per_year: usize,
    years: u32,
    growth: f64,
    seed: u64,
) -> Vec<Scenario> {
    let counts = allocate_counts(table, per_year);
    let mut out = Vec::new();
    for year in 0..years {
        for (seg, &n_i) in table.iter().zip(&counts) {
            out.extend(sample_segment(net, seg, n_i, growth, year, seed));
        }
    }
    out
}

/// Congestion classification of one scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Classification {
    Uncongested,
    Congested,
    Infeasible,
}

/// Margins used by the default congestion classifier.
#[derive(Debug, Clone)]
pub struct MarginConfig {
    /// relative margin required below every line rating
    pub flow: f64,
    /// absolute pu margin required inside the voltage band
    pub voltage: f64,
}

impl Default for MarginConfig {
    fn default() -> Self {
        MarginConfig { flow: 0.02, voltage: 0.005 }
    }
}

/// Classify a scenario by solving a power flow at a proportional dispatch
/// and checking voltage and line-flow margins. Power-flow failure counts as
/// `Infeasible`, never as an error.
pub fn classify_scenario(
    net: &Network,
    scenario: &Scenario,
    pf: &PfConfig,
    margins: &MarginConfig,
) -> Classification {
    let loads = scenario.loads();
    let mut state = SystemState::flat(net);
    let total_load: f64 = loads.p.iter().sum();
    let total_init: f64 = state.p_gen.iter().sum();
    if total_init.abs() > 1e-9 {
        let k = total_load / total_init;
        for p in state.p_gen.iter_mut() {
            *p *= k;
        }
    }
    let sol = match acpf::solve_pf(net, &state, &loads, &DispatchSpec::from_network(net), pf) {
        Ok(s) => s,
        Err(_) => return Classification::Infeasible,
    };
    let st = &sol.state;
    for i in 0..net.n_bus() {
        if st.v[i] > net.pu.v_max[i] - margins.voltage
            || st.v[i] < net.pu.v_min[i] + margins.voltage
        {
            return Classification::Congested;
        }
    }
    let sq = match acpf::apparent_sq(net, st) {
        Ok(s) => s,
        Err(_) => return Classification::Infeasible,
    };
    let nl = net.n_branch();
    for l in 0..nl {
        let rate = net.pu.s_rate[l];
        if rate <= 0.0 {
            continue;
        }
        let lim = (rate * (1.0 - margins.flow)).powi(2);
        if sq[l] > lim || sq[nl + l] > lim {
            return Classification::Congested;
        }
    }
    Classification::Uncongested
}

/// Collapse a segment's samples when every one of them is uncongested: the
/// single re-scaled base scenario then carries the whole segment mass.
/// Otherwise the samples are returned unchanged.
pub fn congestion_filter<F>(
    net: &Network,
    seg: &LdSegment,
    growth: f64,
    year: u32,
    samples: Vec<Scenario>,
    mut classify: F,
) -> Vec<Scenario>
where
    F: FnMut(&Scenario) -> Classification,
{
    if samples.is_empty() {
        return samples;
    }
    let all_clear = samples.iter().all(|s| classify(s) == Classification::Uncongested);
    if all_clear {
        vec![segment_base_scenario(net, seg, growth, year)]
    } else {
        samples
    }
}

/// Serialize scenarios as JSON lines.
pub fn write_scenarios<W: Write>(w: &mut W, scenarios: &[Scenario]) -> std::io::Result<()> {
    for s in scenarios {
        let line = serde_json::to_string(s).expect("scenario serialization cannot fail");
        writeln!(w, "{line}")?;
    }
    Ok(())
}

pub fn read_scenarios<R: BufRead>(r: R) -> std::io::Result<Vec<Scenario>> {
    let mut out = Vec::new();
    for line in r.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let s: Scenario = serde_json::from_str(&line)
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?;
        out.push(s);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::parse_case;
    use approx::assert_abs_diff_eq;

    const CASE30: &str = include_str!("../cases/case30.m");

    #[test]
    fn ld_table_matches_reference() {
        let t = default_ld_table();
        assert_eq!(t.len(), 6);
        let total: f64 = t.iter().map(|s| s.weight).sum();
        assert_abs_diff_eq!(total, 100.0, epsilon = 1e-9);
        assert_abs_diff_eq!(t[0].alpha, 0.940, epsilon = 1e-12);
        // monotone decreasing loading levels
        for w in t.windows(2) {
            assert!(w[0].alpha > w[1].alpha);
        }
        // midpoint identity
        for s in &t {
            assert_abs_diff_eq!(s.alpha, 0.5 * (s.alpha_hi + s.alpha_lo), epsilon = 1e-12);
        }
    }

    #[test]
    fn zero_sigma_samples_identical() {
        let net = parse_case(CASE30).unwrap();
        let seg = LdSegment::new(1, 10.0, 0.8, 0.0);
        let s = sample_segment(&net, &seg, 4, 0.0, 0, 7);
        for sc in &s {
            for (a, b) in sc.p_load.iter().zip(&net.pu.p_load) {
                assert_abs_diff_eq!(*a, 0.8 * b, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn sample_mean_approaches_base() {
        let net = parse_case(CASE30).unwrap();
        let seg = LdSegment::new(2, 10.0, 0.9, 0.05);
        let n = 100_000usize;
        let scenarios = sample_segment(&net, &seg, n, 0.0, 0, 13);
        let bus = net.dense_bus_of_id(8).unwrap();
        let base = 0.9 * net.pu.p_load[bus];
        let mean: f64 = scenarios.iter().map(|s| s.p_load[bus]).sum::<f64>() / n as f64;
        let tol = 3.0 * seg.sigma * base / (n as f64).sqrt();
        assert!((mean - base).abs() < tol, "mean {mean} base {base} tol {tol}");
    }

    #[test]
    fn growth_factor_compounds() {
        let net = parse_case(CASE30).unwrap();
        let seg = LdSegment::new(1, 10.0, 1.0, 0.0);
        let s = sample_segment(&net, &seg, 1, 0.015, 10, 1);
        let factor = 1.015f64.powi(10);
        assert_abs_diff_eq!(factor, 1.1605, epsilon = 1e-4);
        let bus = net.dense_bus_of_id(8).unwrap();
        assert_abs_diff_eq!(s[0].p_load[bus], factor * net.pu.p_load[bus], epsilon = 1e-12);
    }

    #[test]
    fn reproducible_under_seed() {
        let net = parse_case(CASE30).unwrap();
        let table = default_ld_table();
        let a = sample_years(&net, &table, 16, 2, 0.015, 42);
        let b = sample_years(&net, &table, 16, 2, 0.015, 42);
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        let c = sample_years(&net, &table, 16, 2, 0.015, 43);
        assert_ne!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&c).unwrap());
    }

    #[test]
    fn counts_allocation() {
        let table = default_ld_table();
        let counts = allocate_counts(&table, 16);
        assert_eq!(counts.iter().sum::<usize>(), 16);
        assert!(counts.iter().all(|&c| c >= 1));
        // proportional: the two 25 % segments get the most
        assert_eq!(counts[2], 4);
        assert_eq!(counts[3], 4);
    }

    #[test]
    fn yearly_totals() {
        let net = parse_case(CASE30).unwrap();
        let table = default_ld_table();
        let set = sample_years(&net, &table, 16, 10, 0.015, 5);
        assert_eq!(set.len(), 160);
        // per-year probability mass is 1
        for year in 0..10u32 {
            let mass: f64 = set.iter().filter(|s| s.year == year).map(|s| s.probability).sum();
            assert_abs_diff_eq!(mass, 1.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn filter_collapses_clear_segment() {
        let net = parse_case(CASE30).unwrap();
        let seg = LdSegment::new(6, 6.2, 0.51, 0.078);
        let samples = sample_segment(&net, &seg, 16, 0.0, 0, 3);
        let filtered = congestion_filter(&net, &seg, 0.0, 0, samples.clone(), |s| {
            classify_scenario(&net, s, &PfConfig::default(), &MarginConfig::default())
        });
        // the lightest segment of the 30-bus case is uncongested
        assert_eq!(filtered.len(), 1);
        assert_abs_diff_eq!(filtered[0].probability, 0.062, epsilon = 1e-12);
        // probability mass conserved
        let before: f64 = samples.iter().map(|s| s.probability).sum();
        let after: f64 = filtered.iter().map(|s| s.probability).sum();
        assert_abs_diff_eq!(before, after, epsilon = 1e-12);
    }

    #[test]
    fn filter_keeps_congested_segment() {
        let net = parse_case(CASE30).unwrap();
        let seg = LdSegment::new(1, 5.5, 0.94, 0.064);
        let samples = sample_segment(&net, &seg, 8, 0.0, 0, 3);
        let mut calls = 0usize;
        let filtered = congestion_filter(&net, &seg, 0.0, 0, samples.clone(), |_| {
            calls += 1;
            if calls == 3 {
                Classification::Congested
            } else {
                Classification::Uncongested
            }
        });
        assert_eq!(filtered.len(), 8);
    }

    #[test]
    fn jsonl_round_trip() {
        let net = parse_case(CASE30).unwrap();
        let table = default_ld_table();
        let set = sample_years(&net, &table, 8, 1, 0.0, 9);
        let mut buf = Vec::new();
        write_scenarios(&mut buf, &set).unwrap();
        let back = read_scenarios(std::io::BufReader::new(&buf[..])).unwrap();
        assert_eq!(serde_json::to_string(&set).unwrap(), serde_json::to_string(&back).unwrap());
    }

    #[test]
    fn scaling_linearity() {
        let net = parse_case(CASE30).unwrap();
        let doubled = net.scale_loads(2.0).unwrap();
        let seg = LdSegment::new(1, 10.0, 0.8, 0.0);
        let a = sample_segment(&net, &seg, 1, 0.0, 0, 1);
        let b = sample_segment(&doubled, &seg, 1, 0.0, 0, 1);
        for (x, y) in a[0].p_load.iter().zip(&b[0].p_load) {
            assert_abs_diff_eq!(2.0 * x, *y, epsilon = 1e-12);
        }
    }
}
