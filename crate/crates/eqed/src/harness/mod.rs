//! Campaign driver: synthetic designs, seeded error-injection runs through
//! the full localization pipeline, the brute-force oracle cross-check, and
//! CSV reporting for parameter studies.

mod generate;
mod oracle;

pub use generate::{
    generate_design, GenError, GenInit, GeneratorParams, MixRatios, Topology,
};
pub use oracle::{brute_force_oracle, OracleError};

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::time::Instant;

use thiserror::Error;

use crate::bmc::OneShotMode;
use crate::localize::{
    self, run_pipeline, CandidateMode, LocalizeConfig, LocalizeError,
};
use crate::netlist::{elaborate, parse_netlist, ElaborateError, ElaboratedDesign, FfId, ParseError};
use crate::partition::{
    build_extra_interface, group_interfaces, partition_design, plan_signatures, BMap, BlockId,
    Partition, PlanError, SignaturePlan,
};
use crate::rng::named_stream;
use crate::sim::{detect, run, simulate, InjectionSpec, SimError, SimOptions, Stimulus};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config line {line}: {msg}")]
    Config { line: usize, msg: String },
    #[error("campaign needs a netlist or generator parameters")]
    NoDesign,
    #[error("tradeoff study needs at least two b values")]
    SingleB,
    #[error(transparent)]
    Gen(#[from] GenError),
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Elaborate(#[from] ElaborateError),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Localize(#[from] LocalizeError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Everything one campaign needs. Flat key=value config files map onto
/// this (see [`CampaignConfig::parse`]).
#[derive(Debug, Clone)]
pub struct CampaignConfig {
    /// Inline netlist text (already loaded) or generator parameters.
    pub netlist: Option<(String, String)>, // (text, top)
    pub generator: Option<GeneratorParams>,
    pub design_seed: u64,
    pub n: u64,
    pub b: BMap,
    pub budget: usize,
    pub seeds: u64,
    pub seed_base: u64,
    pub cycles: u64,
    pub mode: CandidateMode,
    pub ncc: bool,
    pub depth: Option<u32>,
    pub one_shot: OneShotMode,
    /// Concrete-init oracle mode: constrain initial state, sample
    /// injections early so the window reaches power-on, and cross-check
    /// candidates against the brute-force oracle.
    pub oracle: bool,
    /// Extra designer-specified signature blocks: (id, signal names).
    pub extras: Vec<(String, Vec<String>)>,
}

impl CampaignConfig {
    pub fn standard(seeds: u64) -> Self {
        CampaignConfig {
            netlist: None,
            generator: Some(GeneratorParams::standard()),
            design_seed: 1,
            n: 8,
            b: BMap::uniform(8),
            budget: 800,
            seeds,
            seed_base: 1,
            cycles: 48,
            mode: CandidateMode::Pair,
            ncc: true,
            depth: None,
            one_shot: OneShotMode::Direct,
            oracle: false,
            extras: Vec::new(),
        }
    }

    pub fn oracle(seeds: u64) -> Self {
        CampaignConfig {
            netlist: None,
            generator: Some(GeneratorParams::oracle()),
            design_seed: 2,
            n: 8,
            b: BMap::uniform(8),
            budget: 200,
            seeds,
            seed_base: 1,
            cycles: 16,
            mode: CandidateMode::Pair,
            ncc: false,
            depth: None,
            one_shot: OneShotMode::Direct,
            oracle: true,
            extras: Vec::new(),
        }
    }

    /// Parse the flat key=value config format (# comments). Unknown keys
    /// are errors.
    pub fn parse(text: &str) -> Result<Self, HarnessError> {
        let mut cfg = CampaignConfig::standard(10);
        cfg.generator = None;
        let mut gen = GeneratorParams::standard();
        let mut use_gen = false;
        let mut netlist_path: Option<String> = None;
        let mut top = "top".to_string();

        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap().trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or(HarnessError::Config {
                line,
                msg: "expected key = value".into(),
            })?;
            let key = key.trim();
            let value = value.trim();
            let bad = |msg: String| HarnessError::Config { line, msg };
            let num = |v: &str| -> Result<u64, HarnessError> {
                v.parse().map_err(|_| HarnessError::Config {
                    line,
                    msg: format!("bad number `{v}`"),
                })
            };
            match key {
                "netlist" => netlist_path = Some(value.to_string()),
                "top" => top = value.to_string(),
                "gen" => {
                    use_gen = true;
                    if let Some(rest) = value.strip_prefix("grid ") {
                        let (r, c) = rest.split_once('x').ok_or_else(|| {
                            bad(format!("bad grid spec `{rest}` (want RxC)"))
                        })?;
                        gen.topology = Topology::Grid {
                            rows: num(r)? as usize,
                            cols: num(c)? as usize,
                        };
                    } else if let Some(rest) = value.strip_prefix("parallel ") {
                        gen.topology = Topology::Parallel {
                            lanes: num(rest)? as usize,
                        };
                    } else {
                        return Err(bad(format!("unknown topology `{value}`")));
                    }
                }
                "gates" => gen.gates_per_block = num(value)? as usize,
                "stages" => gen.stages = num(value)? as usize,
                "ffs_per_stage" => gen.ffs_per_stage = num(value)? as usize,
                "bus" => gen.bus_width = num(value)? as usize,
                "pi_bits" => gen.pi_bits = num(value)? as usize,
                "hub_mem" => gen.hub_mem = num(value)? as usize,
                "masked" => gen.masked_ffs = num(value)? as usize,
                "dbg" => gen.dbg_outputs = num(value)? as usize,
                "second_clock" => gen.second_clock = value == "1" || value == "on",
                "init" => {
                    gen.init = match value {
                        "x" => GenInit::Symbolic,
                        "0" => GenInit::Zero,
                        "random" => GenInit::Random,
                        other => return Err(bad(format!("unknown init `{other}`"))),
                    }
                }
                "design_seed" => cfg.design_seed = num(value)?,
                "n" => cfg.n = num(value)?,
                "b" => cfg.b.default = num(value)? as u32,
                "b_block" => {
                    for part in value.split(',') {
                        let (blk, b) = part.split_once(':').ok_or_else(|| {
                            bad(format!("bad b_block entry `{part}` (want BLOCK:B)"))
                        })?;
                        cfg.b
                            .overrides
                            .insert(num(blk.trim())? as BlockId, num(b.trim())? as u32);
                    }
                }
                "budget" => cfg.budget = num(value)? as usize,
                "seeds" => cfg.seeds = num(value)?,
                "seed_base" => cfg.seed_base = num(value)?,
                "cycles" => cfg.cycles = num(value)?,
                "mode" => {
                    cfg.mode = match value {
                        "ff" => CandidateMode::Ff,
                        "pair" => CandidateMode::Pair,
                        other => return Err(bad(format!("unknown mode `{other}`"))),
                    }
                }
                "ncc" => cfg.ncc = value == "on" || value == "1",
                "depth" => {
                    cfg.depth = if value == "none" {
                        None
                    } else {
                        Some(num(value)? as u32)
                    }
                }
                "one_shot" => {
                    cfg.one_shot = match value {
                        "direct" => OneShotMode::Direct,
                        "gates" => OneShotMode::GateLevel,
                        other => return Err(bad(format!("unknown one_shot `{other}`"))),
                    }
                }
                "oracle" => cfg.oracle = value == "on" || value == "1",
                "extra" => {
                    let (id, sigs) = value.split_once(':').ok_or_else(|| {
                        bad("extra wants ID:sig;sig;...".to_string())
                    })?;
                    cfg.extras.push((
                        id.trim().to_string(),
                        sigs.split(';').map(|s| s.trim().to_string()).collect(),
                    ));
                }
                other => return Err(bad(format!("unknown key `{other}`"))),
            }
        }

        if let Some(path) = netlist_path {
            let text = std::fs::read_to_string(&path)?;
            cfg.netlist = Some((text, top));
        } else if use_gen {
            cfg.generator = Some(gen);
        } else {
            return Err(HarnessError::NoDesign);
        }
        Ok(cfg)
    }
}

/// A prepared (design, partition, plan) triple.
pub struct Instrumented {
    pub design: ElaboratedDesign,
    pub partition: Partition,
    pub plan: SignaturePlan,
}

/// Build the design and its instrumentation plan from a config.
pub fn instrument(config: &CampaignConfig) -> Result<Instrumented, HarnessError> {
    let (text, top) = match (&config.netlist, &config.generator) {
        (Some((text, top)), _) => (text.clone(), top.clone()),
        (None, Some(gen)) => (generate_design(gen, config.design_seed)?, "top".to_string()),
        (None, None) => return Err(HarnessError::NoDesign),
    };
    let netlist = parse_netlist(&text)?;
    let design = elaborate(&netlist, &top)?;
    let partition = partition_design(&design, config.budget);
    let mut interfaces = group_interfaces(&design, &partition);
    for (id, signals) in &config.extras {
        interfaces.push(build_extra_interface(&design, &partition, id, signals)?);
    }
    let plan = plan_signatures(&design, &interfaces, &config.b, config.n, config.budget)?;
    Ok(Instrumented {
        design,
        partition,
        plan,
    })
}

/// One campaign run's outcome.
#[derive(Debug, Clone)]
pub struct RunRow {
    pub seed: u64,
    pub ff: String,
    pub ff_id: FfId,
    pub cycle: u64,
    pub detected: bool,
    pub detect_cycle: Option<u64>,
    pub latency: Option<u64>,
    pub window_covered: bool,
    pub short_window: bool,
    pub truth_block: BlockId,
    pub flagged: Vec<BlockId>,
    /// Every block not containing the injection was satisfiable.
    pub nonbuggy_all_sat: Option<bool>,
    /// The block containing the injection was flagged.
    pub buggy_unsat: Option<bool>,
    pub pre_pairs: usize,
    pub pre_ffs: usize,
    pub post_pairs: usize,
    pub post_ffs: usize,
    pub traces_post: usize,
    pub trace_bits: u64,
    pub factor: Option<f64>,
    pub truth_in_pre: Option<bool>,
    pub truth_in_post: Option<bool>,
    pub oracle_equal: Option<bool>,
    pub sim_ms: u64,
    pub locate_ms: u64,
    pub enum_ms: u64,
    pub ncc_ms: u64,
    pub error: Option<String>,
}

impl RunRow {
    fn blank(seed: u64) -> Self {
        RunRow {
            seed,
            ff: String::new(),
            ff_id: 0,
            cycle: 0,
            detected: false,
            detect_cycle: None,
            latency: None,
            window_covered: false,
            short_window: false,
            truth_block: 0,
            flagged: Vec::new(),
            nonbuggy_all_sat: None,
            buggy_unsat: None,
            pre_pairs: 0,
            pre_ffs: 0,
            post_pairs: 0,
            post_ffs: 0,
            traces_post: 0,
            trace_bits: 0,
            factor: None,
            truth_in_pre: None,
            truth_in_post: None,
            oracle_equal: None,
            sim_ms: 0,
            locate_ms: 0,
            enum_ms: 0,
            ncc_ms: 0,
            error: None,
        }
    }
}

pub const CSV_HEADER: &str = "seed,ff,cycle,detected,detect_cycle,latency,window_covered,\
short_window,flagged_blocks,truth_block,nonbuggy_all_sat,buggy_unsat,pre_pairs,pre_ffs,\
post_pairs,post_ffs,traces_post,trace_bits,factor,truth_in_pre,truth_in_post,oracle_equal,\
sig_ffs,area_proxy,sim_ms,locate_ms,enum_ms,ncc_ms,error";

fn opt<T: std::fmt::Display>(v: &Option<T>) -> String {
    v.as_ref().map(|x| x.to_string()).unwrap_or_default()
}

fn csv_row(row: &RunRow, sig_ffs: u64, area: f64) -> String {
    let flagged: Vec<String> = row.flagged.iter().map(|b| b.to_string()).collect();
    format!(
        "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{:.6},{},{},{},{},{}",
        row.seed,
        row.ff,
        row.cycle,
        u8::from(row.detected),
        opt(&row.detect_cycle),
        opt(&row.latency),
        u8::from(row.window_covered),
        u8::from(row.short_window),
        flagged.join(";"),
        row.truth_block,
        opt(&row.nonbuggy_all_sat),
        opt(&row.buggy_unsat),
        row.pre_pairs,
        row.pre_ffs,
        row.post_pairs,
        row.post_ffs,
        row.traces_post,
        row.trace_bits,
        opt(&row.factor),
        opt(&row.truth_in_pre),
        opt(&row.truth_in_post),
        opt(&row.oracle_equal),
        sig_ffs,
        area,
        row.sim_ms,
        row.locate_ms,
        row.enum_ms,
        row.ncc_ms,
        opt(&row.error),
    )
}

/// Campaign output: structured rows plus the rendered CSV.
#[derive(Debug, Clone)]
pub struct CampaignResult {
    pub rows: Vec<RunRow>,
    pub csv: String,
    pub sig_ffs: u64,
    pub area_proxy: f64,
}

/// Execute one injection run against a prepared design.
fn one_run(
    inst: &Instrumented,
    config: &CampaignConfig,
    seed: u64,
) -> Result<RunRow, HarnessError> {
    let design = &inst.design;
    let mut row = RunRow::blank(seed);

    // injection sampling: uniform FF, cycle uniform within the window
    // span that keeps the capture window over the injection
    let mut rng = named_stream(seed, "inject");
    let ff_id = rng.next_below(design.ff_count() as u64) as FfId;
    let (lo, hi) = if config.oracle {
        // detection must stay within the first 2N cycles so the window
        // reaches power-on (frame 0 = concrete initial state)
        (2, config.n)
    } else {
        (config.n, 2 * config.n)
    };
    let cycle = lo + rng.next_below(hi - lo);
    row.ff = design.ffs[ff_id as usize].name.clone();
    row.ff_id = ff_id;
    row.cycle = cycle;
    row.truth_block = inst.partition.ff_block[ff_id as usize];

    let stimulus = Stimulus::Seeded {
        seed,
        cycles: config.cycles,
    };
    let t_sim = Instant::now();
    let golden = simulate(design, &inst.plan, &stimulus, &SimOptions::default())?;
    let opts = SimOptions {
        injection: Some(InjectionSpec {
            ff_path: row.ff.clone(),
            cycle,
        }),
        ..SimOptions::default()
    };
    let actual = run(design, &inst.plan, &stimulus, &opts, Some(&golden.monitor_trace))?;
    row.sim_ms = t_sim.elapsed().as_millis() as u64;

    row.detected = actual.detection_cycle.is_some();
    row.detect_cycle = actual.detection_cycle;
    row.latency = actual.detection_cycle.map(|d| d - cycle);
    if !row.detected {
        debug_assert_eq!(detect(&golden, &actual)?, None);
        return Ok(row);
    }

    let cfg = LocalizeConfig {
        mode: config.mode,
        one_shot: config.one_shot,
        symbolic_init: !config.oracle,
        ncc: config.ncc,
        depth_limit: config.depth,
        ..LocalizeConfig::default()
    };
    let outcome = run_pipeline(
        design,
        &inst.partition,
        &inst.plan,
        &actual.snapshot,
        &actual.external,
        &cfg,
    );
    let pipeline = match outcome {
        Ok(p) => p,
        Err(e) => {
            row.error = Some(e.to_string());
            return Ok(row);
        }
    };

    let window = pipeline.verdicts.window;
    row.window_covered = window.covers(cycle);
    row.short_window = window.short_window;
    row.flagged = pipeline.verdicts.flagged.clone();
    row.locate_ms = pipeline
        .results
        .first()
        .map_or(0, |(_, _, r)| r.timings.locate_ms);
    row.nonbuggy_all_sat = Some(
        pipeline
            .verdicts
            .per_block
            .iter()
            .all(|&(b, sat)| b == row.truth_block || sat),
    );
    row.buggy_unsat = Some(pipeline.verdicts.flagged.contains(&row.truth_block));

    if let Some((before, after, report)) = pipeline
        .results
        .iter()
        .find(|(b, _, _)| b.block == row.truth_block)
        .or(pipeline.results.first())
    {
        row.pre_pairs = report.candidates_pre;
        row.pre_ffs = report.ff_candidates_pre;
        row.post_pairs = report.candidates_post;
        row.post_ffs = report.ff_candidates_post;
        row.traces_post = report.surviving_traces;
        row.trace_bits = report.trace_bits;
        row.factor = report.localization_factor;
        row.enum_ms = report.timings.enumerate_ms;
        row.ncc_ms = report.timings.ncc_ms;
        if before.block == row.truth_block {
            let truth_pre = match config.mode {
                CandidateMode::Pair => before.contains_pair(ff_id, cycle),
                CandidateMode::Ff => before.distinct_ffs().contains(&ff_id),
            };
            let truth_post = match config.mode {
                CandidateMode::Pair => after.contains_pair(ff_id, cycle),
                CandidateMode::Ff => after.distinct_ffs().contains(&ff_id),
            };
            row.truth_in_pre = Some(truth_pre);
            row.truth_in_post = Some(truth_post);

            if config.oracle && config.mode == CandidateMode::Pair {
                let pairs = brute_force_oracle(
                    design,
                    &inst.partition,
                    &inst.plan,
                    &stimulus,
                    &actual.snapshot,
                    &actual.external,
                    &window,
                    before.block,
                )?;
                row.oracle_equal = Some(pairs == before.pairs());
            }
        }
    }
    Ok(row)
}

/// Run a seeded campaign: one row per seed; per-run failures are recorded
/// in the row and the campaign continues.
pub fn run_campaign(config: &CampaignConfig) -> Result<CampaignResult, HarnessError> {
    let inst = instrument(config)?;
    let sig_ffs = inst.plan.added_ffs();
    let area = inst.plan.area_proxy(inst.design.ff_count());

    let mut rows = Vec::new();
    let mut csv = String::new();
    writeln!(csv, "{CSV_HEADER}").unwrap();
    for i in 0..config.seeds {
        let seed = config.seed_base + i;
        let row = match one_run(&inst, config, seed) {
            Ok(r) => r,
            Err(e) => {
                let mut r = RunRow::blank(seed);
                r.error = Some(e.to_string());
                r
            }
        };
        writeln!(csv, "{}", csv_row(&row, sig_ffs, area)).unwrap();
        rows.push(row);
    }
    Ok(CampaignResult {
        rows,
        csv,
        sig_ffs,
        area_proxy: area,
    })
}

/// One summary row of the b-parameter study.
#[derive(Debug, Clone)]
pub struct TradeoffRow {
    pub b: u32,
    pub sig_ffs: u64,
    pub area_proxy: f64,
    pub detected_runs: usize,
    pub max_traces_pre: usize,
    pub mean_traces_pre: f64,
    pub max_traces_post: usize,
    pub mean_traces_post: f64,
    pub mean_ffs_pre: f64,
    pub mean_ffs_post: f64,
}

#[derive(Debug, Clone)]
pub struct TradeoffResult {
    pub rows: Vec<TradeoffRow>,
    pub csv: String,
}

/// Re-plan and re-run the campaign per b value; reports candidate-trace
/// counts before and after neighbor-consistency filtering.
pub fn tradeoff_study(
    config: &CampaignConfig,
    b_values: &[u32],
) -> Result<TradeoffResult, HarnessError> {
    if b_values.len() < 2 {
        return Err(HarnessError::SingleB);
    }
    let mut rows = Vec::new();
    let mut csv = String::from(
        "b,sig_ffs,area_proxy,detected_runs,max_traces_pre,mean_traces_pre,\
max_traces_post,mean_traces_post,mean_ffs_pre,mean_ffs_post\n",
    );
    for &b in b_values {
        let mut cfg = config.clone();
        cfg.b = BMap::uniform(b);
        let result = run_campaign(&cfg)?;
        let done: Vec<&RunRow> = result
            .rows
            .iter()
            .filter(|r| r.detected && r.error.is_none() && r.window_covered && r.pre_pairs > 0)
            .collect();
        // pre-NCC trace counts are not recorded per row; use pair counts
        // as the trace proxy before filtering and the surviving-trace
        // count after. Means are over detected runs.
        let mean =
            |f: &dyn Fn(&RunRow) -> f64| -> f64 {
                if done.is_empty() {
                    0.0
                } else {
                    done.iter().map(|r| f(r)).sum::<f64>() / done.len() as f64
                }
            };
        let row = TradeoffRow {
            b,
            sig_ffs: result.sig_ffs,
            area_proxy: result.area_proxy,
            detected_runs: done.len(),
            max_traces_pre: done.iter().map(|r| r.pre_pairs).max().unwrap_or(0),
            mean_traces_pre: mean(&|r| r.pre_pairs as f64),
            max_traces_post: done.iter().map(|r| r.traces_post).max().unwrap_or(0),
            mean_traces_post: mean(&|r| r.traces_post as f64),
            mean_ffs_pre: mean(&|r| r.pre_ffs as f64),
            mean_ffs_post: mean(&|r| r.post_ffs as f64),
        };
        writeln!(
            csv,
            "{},{},{:.6},{},{},{:.3},{},{:.3},{:.3},{:.3}",
            row.b,
            row.sig_ffs,
            row.area_proxy,
            row.detected_runs,
            row.max_traces_pre,
            row.mean_traces_pre,
            row.max_traces_post,
            row.mean_traces_post,
            row.mean_ffs_pre,
            row.mean_ffs_post
        )
        .unwrap();
        rows.push(row);
    }
    Ok(TradeoffResult { rows, csv })
}

/// Summary of per-block localization stats over a campaign, used by the
/// studies and tests.
pub fn localize_summary(rows: &[RunRow]) -> BTreeMap<&'static str, f64> {
    let detected: Vec<&RunRow> = rows.iter().filter(|r| r.detected).collect();
    let covered: Vec<&&RunRow> = detected.iter().filter(|r| r.window_covered).collect();
    let mut m = BTreeMap::new();
    m.insert("runs", rows.len() as f64);
    m.insert("detected", detected.len() as f64);
    m.insert("covered", covered.len() as f64);
    m.insert(
        "buggy_unsat",
        covered
            .iter()
            .filter(|r| r.buggy_unsat == Some(true))
            .count() as f64,
    );
    m
}

pub use localize::write_report_file;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn debug_sweep() {
        use crate::harness::generate::*;
        let base = GeneratorParams::standard();
        let variants: Vec<(&str, GeneratorParams, u64)> = vec![
            ("bus4 pi2 ff5 dbg2 N8", GeneratorParams { bus_width: 4, pi_bits: 2, ffs_per_stage: 5, dbg_width: 2, ..base.clone() }, 8),
            ("bus3 pi2 ff5 dbg3 N8", GeneratorParams { bus_width: 3, pi_bits: 2, ffs_per_stage: 5, dbg_width: 3, ..base.clone() }, 8),
            ("bus4 pi2 ff4 dbg3 N8", GeneratorParams { bus_width: 4, pi_bits: 2, ffs_per_stage: 4, dbg_width: 3, ..base.clone() }, 8),
            ("bus4 pi3 ff4 dbg3 andheavy N8", GeneratorParams { bus_width: 4, pi_bits: 3, ffs_per_stage: 4, dbg_width: 3, mix: MixRatios { and_or: 8, xor: 2, not: 1, mux: 2 }, ..base.clone() }, 8),
        ];
        for (name, gen, n) in variants {
            let mut cfg = CampaignConfig::standard(10);
            cfg.generator = Some(gen);
            cfg.n = n;
            cfg.cycles = 6 * n;
            cfg.ncc = false;
            let result = match run_campaign(&cfg) {
                Ok(r) => r,
                Err(e) => { eprintln!("{name}: ERROR {e}"); continue }
            };
            let mut covered = 0;
            let mut unsat = 0;
            let mut nb = 0;
            let mut pre_sum = 0;
            for r in &result.rows {
                if r.detected && r.window_covered && r.error.is_none() {
                    covered += 1;
                    if r.buggy_unsat == Some(true) { unsat += 1; }
                    if r.nonbuggy_all_sat == Some(true) { nb += 1; }
                    pre_sum += r.pre_pairs;
                }
            }
            eprintln!("{name}: covered={covered} buggy_unsat={unsat} nonbuggy_sat={nb} pre_sum={pre_sum}");
        }
    }

    #[test]
    fn debug_one_case() {
        use crate::bmc::{extract_trace, solve as bsolve, Backend, SatOutcome};
        use crate::localize::{build_block_problem, window_info, LocalizeConfig};
        use crate::sim::{run, simulate, InjectionSpec, SimOptions, Stimulus};
        let cfg = CampaignConfig::standard(1);
        let inst = instrument(&cfg).unwrap();
        let (design, partition, plan) = (&inst.design, &inst.partition, &inst.plan);
        let stim = Stimulus::Seeded { seed: 1, cycles: 48 };
        let golden = simulate(design, plan, &stim, &SimOptions::default()).unwrap();

        // sanity: golden snapshot leaves every block satisfiable
        let lcfg = LocalizeConfig::default();
        let gv = crate::localize::localize_block(
            design, partition, plan, &golden.snapshot, &golden.external, &lcfg,
        )
        .unwrap();
        eprintln!("golden verdicts: {:?}", gv.per_block);

        let opts = SimOptions {
            injection: Some(InjectionSpec { ff_path: "top.u1.f16".into(), cycle: 12 }),
            record_values: true,
            record_ifaces: true,
            ..SimOptions::default()
        };
        let actual = run(design, plan, &stim, &opts, Some(&golden.monitor_trace)).unwrap();
        eprintln!("detect={:?}", actual.detection_cycle);
        let w = window_info(plan, &actual.snapshot).unwrap();
        eprintln!("T={} start={} sel={:?}", w.t, w.window_start, w.sel);
        let truth = partition.ff_block[design.ff_by_name("top.u1.f16").unwrap() as usize];
        eprintln!("truth block {truth}");

        // replay the buggy run without halting to get full value traces
        let full = run(design, plan, &Stimulus::Seeded { seed: 1, cycles: actual.snapshot.detect_cycle + 1 }, &opts, None).unwrap();
        let vt = full.value_trace.as_ref().unwrap();

        for symbolic in [true, false] {
            let mut cnf = build_block_problem(
                design, partition, plan, truth, w.t, w.sel, w.window_start,
                &actual.snapshot, &actual.external, symbolic,
            )
            .unwrap();
            if !symbolic {
                // additionally pin init to the REAL buggy run state at frame 0
                for &f in &partition.blocks[truth].ffs {
                    let q = design.ffs[f as usize].q_out;
                    let v = cnf.var(crate::bmc::VarKey::Signal { sig: q, frame: 0 });
                    let val = vt[w.window_start as usize][q as usize];
                    cnf.add_clause(vec![if val { v as i32 } else { -(v as i32) }]);
                }
            }
            match bsolve(&cnf, &[], &Backend::Internal).unwrap() {
                SatOutcome::Unsat => eprintln!("symbolic={symbolic}: UNSAT"),
                SatOutcome::Sat(m) => {
                    let tr = extract_trace(&cnf, plan, &m).unwrap();
                    eprintln!("symbolic={symbolic}: SAT; deviations vs real:");
                    for (pi, frames) in &tr.ifaces {
                        let iface = &plan.sigs[*pi as usize].interface;
                        for (t, row) in frames.iter().enumerate() {
                            let realrow: Vec<bool> = iface
                                .signals
                                .iter()
                                .map(|&x| vt[w.window_start as usize + t][x as usize])
                                .collect();
                            let diffs: Vec<usize> =
                                (0..row.len()).filter(|&i| row[i] != realrow[i]).collect();
                            if !diffs.is_empty() {
                                eprintln!("  iface {} frame {t}: bits {:?}", iface.id, diffs);
                            }
                        }
                    }
                    // init deviations
                    let mut init_devs = 0;
                    for &f in &partition.blocks[truth].ffs {
                        let q = design.ffs[f as usize].q_out;
                        if let Some(v) = cnf.varmap.lookup(&crate::bmc::VarKey::Signal { sig: q, frame: 0 }) {
                            if m.value(v) != vt[w.window_start as usize][q as usize] {
                                init_devs += 1;
                            }
                        }
                    }
                    eprintln!("  init deviations: {init_devs}");
                }
            }
        }
    }

    #[test]
    fn debug_campaign_probe() {
        let mut cfg = CampaignConfig::standard(12);
        cfg.seeds = std::env::var("PROBE_SEEDS")
            .ok()
            .and_then(|s| s.parse().ok())
            .unwrap_or(12);
        let result = run_campaign(&cfg).unwrap();
        let mut detected = 0;
        let mut covered = 0;
        let mut nb_sat = 0;
        let mut bug_unsat = 0;
        let mut truth_pre = 0;
        let mut truth_post = 0;
        let mut traces1 = 0;
        let mut pre_sum = 0usize;
        let mut post_sum = 0usize;
        for r in &result.rows {
            if let Some(e) = &r.error {
                eprintln!("seed {} ERROR: {e}", r.seed);
                continue;
            }
            if !r.detected {
                eprintln!("seed {}: vanished ({}@{})", r.seed, r.ff, r.cycle);
                continue;
            }
            detected += 1;
            if !r.window_covered {
                eprintln!("seed {}: window not covered", r.seed);
                continue;
            }
            covered += 1;
            if r.nonbuggy_all_sat == Some(true) { nb_sat += 1; }
            if r.buggy_unsat == Some(true) { bug_unsat += 1; } else {
                eprintln!("seed {}: buggy NOT flagged ({}@{} lat={:?} flagged={:?})", r.seed, r.ff, r.cycle, r.latency, r.flagged);
            }
            if r.truth_in_pre == Some(true) { truth_pre += 1; }
            if r.truth_in_post == Some(true) { truth_post += 1; }
            if r.traces_post == 1 { traces1 += 1; }
            pre_sum += r.pre_pairs;
            post_sum += r.post_pairs;
            eprintln!(
                "seed {}: {}@{} lat={:?} T={} pre={} post={} traces={} enum={}ms ncc={}ms",
                r.seed, r.ff, r.cycle, r.latency,
                0, r.pre_pairs, r.post_pairs, r.traces_post, r.enum_ms, r.ncc_ms
            );
        }
        eprintln!(
            "detected={detected} covered={covered} nb_sat={nb_sat} bug_unsat={bug_unsat} truth_pre={truth_pre} truth_post={truth_post} traces1={traces1} pre_sum={pre_sum} post_sum={post_sum}"
        );
    }
}
