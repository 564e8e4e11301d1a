//! Benchmark sweep over matching modes and seed counts.
//!
//! Output is CSV. The first line is the schema tag [`BENCH_SCHEMA`], the
//! second the column header:
//!
//! `mode,k,repeat,build_ms,search_ms,total_ms,matches,oracle_subset_rate,coverage_area`
//!
//! * `fast`: seed-grid walk; build is the index, search the walk.
//! * `full`: exhaustive reciprocal matching, one row per repeat, `k` empty.
//! * `naive`, `basin`: subsamples of the full set down to the size the fast
//!   walk reaches at the same `k`. Their build time is the (shared) full
//!   matching, plus basin labelling for `basin`; search is the sampling.
//!
//! `oracle_subset_rate` is the fraction of output pairs that are full
//! reciprocal pairs, empty when the oracle is skipped. `coverage_area` is the
//! one-sigma ellipse area of the image-1 match positions.

use std::io::Write;
use std::path::Path;
use std::time::{Duration, Instant};

use clap::ValueEnum;
use recimatch::grids::{CorrespondenceSet, DescriptorGrid};
use recimatch::matcher::{
    basin_biased_subsample, basins_from_graph, coverage_ellipse_area, fast_reciprocal_matches,
    full_reciprocal_matches_timed, naive_subsample, BasinMap, NnGraph,
};
use serde::Serialize;

use crate::error::{CliError, CliResult};

pub const BENCH_SCHEMA: &str = "# recimatch-bench v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Fast,
    Full,
    Naive,
    Basin,
}

impl Mode {
    fn name(self) -> &'static str {
        match self {
            Mode::Fast => "fast",
            Mode::Full => "full",
            Mode::Naive => "naive",
            Mode::Basin => "basin",
        }
    }
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct BenchRecord {
    pub mode: &'static str,
    pub k: Option<usize>,
    pub repeat: usize,
    pub build_ms: f64,
    pub search_ms: f64,
    pub total_ms: f64,
    pub matches: usize,
    pub oracle_subset_rate: Option<f64>,
    pub coverage_area: f64,
}

pub struct BenchConfig {
    pub k_list: Vec<usize>,
    pub modes: Vec<Mode>,
    pub repeat: usize,
    pub max_iters: usize,
    pub seed: u64,
    pub oracle: bool,
}

struct Oracle {
    full: CorrespondenceSet,
    full_time: Duration,
    basins: Option<(BasinMap, Duration)>,
}

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1e3
}

fn subset_rate(set: &CorrespondenceSet, full: &CorrespondenceSet) -> f64 {
    if set.is_empty() {
        return 1.0;
    }
    set.pairs().iter().filter(|p| full.contains(p)).count() as f64 / set.len() as f64
}

fn record(
    mode: Mode,
    k: Option<usize>,
    repeat: usize,
    build: Duration,
    search: Duration,
    set: &CorrespondenceSet,
    rate: Option<f64>,
) -> BenchRecord {
    BenchRecord {
        mode: mode.name(),
        k,
        repeat,
        build_ms: ms(build),
        search_ms: ms(search),
        total_ms: ms(build + search),
        matches: set.len(),
        oracle_subset_rate: rate,
        coverage_area: coverage_ellipse_area(set),
    }
}

pub fn run_bench(
    d1: &DescriptorGrid,
    d2: &DescriptorGrid,
    cfg: &BenchConfig,
) -> CliResult<Vec<BenchRecord>> {
    let needs_basins = cfg.modes.contains(&Mode::Basin);
    let needs_oracle = needs_basins
        || cfg.modes.contains(&Mode::Naive)
        || (cfg.oracle && cfg.modes.contains(&Mode::Fast));
    let oracle = if needs_oracle {
        let start = Instant::now();
        let graph = NnGraph::build(d1, d2)?;
        let full = graph.reciprocal_pairs();
        let full_time = start.elapsed();
        let basins = needs_basins.then(|| {
            let start = Instant::now();
            let b = basins_from_graph(&graph);
            (b, start.elapsed())
        });
        Some(Oracle {
            full,
            full_time,
            basins,
        })
    } else {
        None
    };
    let rate_of = |set: &CorrespondenceSet| oracle.as_ref().map(|o| subset_rate(set, &o.full));

    let mut rows = Vec::new();
    for &mode in &cfg.modes {
        if mode == Mode::Full {
            for r in 0..cfg.repeat {
                let (set, t) = full_reciprocal_matches_timed(d1, d2)?;
                rows.push(record(mode, None, r, t.build, t.search, &set, Some(1.0)));
            }
            continue;
        }
        for &k in &cfg.k_list {
            for r in 0..cfg.repeat {
                let (fast, stats) = fast_reciprocal_matches(d1, d2, k, cfg.max_iters)?;
                let row = match mode {
                    Mode::Fast => record(
                        mode,
                        Some(k),
                        r,
                        stats.build_time,
                        stats.walk_time,
                        &fast,
                        rate_of(&fast),
                    ),
                    Mode::Naive => {
                        let o = oracle.as_ref().unwrap();
                        let start = Instant::now();
                        let set = naive_subsample(&o.full, fast.len(), cfg.seed + r as u64);
                        let t = start.elapsed();
                        record(mode, Some(k), r, o.full_time, t, &set, Some(1.0))
                    }
                    Mode::Basin => {
                        let o = oracle.as_ref().unwrap();
                        let (basins, bt) = o.basins.as_ref().unwrap();
                        let start = Instant::now();
                        let set =
                            basin_biased_subsample(&o.full, basins, fast.len(), cfg.seed + r as u64)?;
                        let t = start.elapsed();
                        record(mode, Some(k), r, o.full_time + *bt, t, &set, Some(1.0))
                    }
                    Mode::Full => unreachable!(),
                };
                rows.push(row);
            }
        }
    }
    Ok(rows)
}

pub fn write_bench_csv(rows: &[BenchRecord], path: &Path) -> CliResult<()> {
    let csv_err = |source| CliError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut file = std::fs::File::create(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    writeln!(file, "{BENCH_SCHEMA}").map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut w = csv::Writer::from_writer(file);
    for row in rows {
        w.serialize(row).map_err(csv_err)?;
    }
    if rows.is_empty() {
        w.write_record([
            "mode",
            "k",
            "repeat",
            "build_ms",
            "search_ms",
            "total_ms",
            "matches",
            "oracle_subset_rate",
            "coverage_area",
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}
