mod bench;
mod error;
mod manifest;

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{ArgAction, Parser, Subcommand, ValueEnum};
use recimatch::coarse2fine::{
    coarse_resolution, coarse_to_fine_with_windows, make_window_grid, C2fConfig, ImageId, Window,
    DEFAULT_COVERAGE, WINDOW_OVERLAP, WINDOW_SIZE,
};
use recimatch::grids::{
    load_confidence_map, load_correspondences, load_descriptor_grid, load_point_map,
    save_confidence_map, save_correspondences_binary, save_correspondences_text,
    save_descriptor_grid, save_label_grid, save_point_map, ConfidenceMap, CorrespondenceSet,
    DescriptorGrid,
};
use recimatch::losses::{
    confidence_loss, matching_loss, regression_loss, total_loss, LossConfig, DEFAULT_ALPHA,
    DEFAULT_BETA, DEFAULT_TAU,
};
use recimatch::matcher::{
    compute_basins, fast_reciprocal_matches, full_reciprocal_matches_timed, MatchRunStats,
    DEFAULT_K, DEFAULT_MAX_ITERS,
};
use recimatch::synth::{generate_scene, DetailLayer, Scene, SceneSpec, WarpSpec};

use crate::bench::{run_bench, write_bench_csv, BenchConfig, Mode};
use crate::error::{CliError, CliResult, GridContext};
use crate::manifest::{grid_key, CoarsePaths, FileProvider, Manifest, ManifestFile};

pub const STATS_SCHEMA: &str = "# recimatch-stats v1";

#[derive(Parser)]
#[command(name = "recimatch", version, about = "Dense reciprocal descriptor matching")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MatchMode {
    Fast,
    Full,
}

#[derive(Subcommand)]
enum Command {
    /// Reciprocal matches between two descriptor grids.
    Match {
        #[arg(long)]
        d1: PathBuf,
        #[arg(long)]
        d2: PathBuf,
        #[arg(long, value_enum, default_value = "fast")]
        mode: MatchMode,
        #[arg(long, default_value_t = DEFAULT_K)]
        k: usize,
        #[arg(long, default_value_t = DEFAULT_MAX_ITERS)]
        max_iters: usize,
        /// Correspondence output; binary for `.corr`/`.bin`, text otherwise.
        #[arg(long)]
        out: PathBuf,
        /// Per-iteration CSV of the walk.
        #[arg(long)]
        stats: Option<PathBuf>,
    },
    /// Coarse-to-fine matching from a manifest of precomputed grids.
    C2f {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value_t = DEFAULT_K)]
        k: usize,
        #[arg(long, default_value_t = DEFAULT_MAX_ITERS)]
        max_iters: usize,
        #[arg(long, default_value_t = DEFAULT_COVERAGE)]
        coverage: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Convergence basin label of every image-1 pixel.
    Basins {
        #[arg(long)]
        d1: PathBuf,
        #[arg(long)]
        d2: PathBuf,
        #[arg(long)]
        out_labels: PathBuf,
        /// Grayscale picture of the labels modulo 256.
        #[arg(long)]
        out_pgm: Option<PathBuf>,
    },
    /// Timing and coverage sweep on a synthetic scene.
    Bench {
        /// Scene description (JSON).
        #[arg(long)]
        scene: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "3000")]
        k_list: Vec<usize>,
        #[arg(long, value_enum, value_delimiter = ',', default_value = "fast")]
        modes: Vec<Mode>,
        #[arg(long, default_value_t = 1)]
        repeat: usize,
        #[arg(long, default_value_t = DEFAULT_MAX_ITERS)]
        max_iters: usize,
        /// Seed of the subsampling modes.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Skip the full-matching oracle for fast-only runs.
        #[arg(long)]
        no_oracle: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate the training losses on one view.
    Loss {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        /// Confidence map; all ones when omitted.
        #[arg(long)]
        conf: Option<PathBuf>,
        #[arg(long)]
        d1: PathBuf,
        #[arg(long)]
        d2: PathBuf,
        #[arg(long)]
        pairs: PathBuf,
        #[arg(long, default_value_t = DEFAULT_ALPHA)]
        alpha: f64,
        #[arg(long, default_value_t = DEFAULT_BETA)]
        beta: f64,
        #[arg(long, default_value_t = DEFAULT_TAU)]
        tau: f64,
        #[arg(long, default_value_t = false, action = ArgAction::Set)]
        metric: bool,
    },
    /// Write a synthetic scene (grids, pointmaps, ground truth) to a directory.
    GenScene {
        /// Scene description (JSON); see `--template`.
        #[arg(long, required_unless_present = "template")]
        spec: Option<PathBuf>,
        #[arg(long, required_unless_present = "template")]
        out_dir: Option<PathBuf>,
        /// Also write coarse and window grids plus `manifest.json`.
        #[arg(long)]
        c2f: bool,
        /// Print an example scene description and exit.
        #[arg(long)]
        template: bool,
    },
}

fn configure_threads() -> CliResult<()> {
    let Ok(value) = std::env::var("RECIMATCH_THREADS") else {
        return Ok(());
    };
    let n: usize = value.trim().parse().map_err(|_| CliError::BadSetting {
        name: "RECIMATCH_THREADS",
        value: value.clone(),
    })?;
    if n > 0 {
        // fails only if a pool already exists, which cannot happen here
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

fn load_grid(path: &Path) -> CliResult<DescriptorGrid> {
    load_descriptor_grid(path).at(path)
}

fn save_matches(set: &CorrespondenceSet, path: &Path) -> CliResult<()> {
    let binary = matches!(
        path.extension().and_then(|e| e.to_str()),
        Some("corr") | Some("bin")
    );
    if binary {
        save_correspondences_binary(set, path).at(path)
    } else {
        save_correspondences_text(set, path).at(path)
    }
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    std::fs::write(path, text).at(path)
}

fn stats_csv(stats: &MatchRunStats) -> String {
    let mut s = format!("{STATS_SCHEMA}\niteration,active_walks,nn_queries\n");
    for (t, (a, q)) in stats.active_counts.iter().zip(&stats.nn_queries).enumerate() {
        s.push_str(&format!("{},{a},{q}\n", t + 1));
    }
    s
}

fn cmd_match(
    d1: &Path,
    d2: &Path,
    mode: MatchMode,
    k: usize,
    max_iters: usize,
    out: &Path,
    stats: Option<&Path>,
) -> CliResult<()> {
    let (g1, g2) = (load_grid(d1)?, load_grid(d2)?);
    let (set, run) = match mode {
        MatchMode::Fast => {
            let (set, run) = fast_reciprocal_matches(&g1, &g2, k, max_iters)?;
            (set, Some(run))
        }
        MatchMode::Full => (full_reciprocal_matches_timed(&g1, &g2)?.0, None),
    };
    save_matches(&set, out)?;
    if let Some(path) = stats {
        let run = run.clone().unwrap_or_else(|| MatchRunStats {
            active_counts: vec![g1.len()],
            nn_queries: vec![g1.len() + g2.len()],
            iterations_run: 1,
            ..Default::default()
        });
        write_text(path, &stats_csv(&run))?;
    }
    println!("matches={}", set.len());
    if let Some(run) = run {
        println!("iterations={}", run.iterations_run);
        println!("dropped_walks={}", run.dropped_walks);
    }
    Ok(())
}

fn cmd_c2f(manifest: &Path, k: usize, max_iters: usize, coverage: f64, out: &Path) -> CliResult<()> {
    if !(0.0..=1.0).contains(&coverage) {
        return Err(CliError::BadSetting {
            name: "coverage",
            value: coverage.to_string(),
        });
    }
    let provider = FileProvider::new(Manifest::load(manifest)?);
    let m = provider.manifest();
    let cfg = C2fConfig {
        k,
        max_iters,
        coverage,
        ..C2fConfig::default()
    };
    let result = coarse_to_fine_with_windows(
        &provider,
        m.size1,
        m.size2,
        &m.windows1,
        &m.windows2,
        &cfg,
    )?;
    save_matches(&result.matches, out)?;
    println!("coarse_matches={}", result.coarse.len());
    println!("window_pairs={}", result.selection.pairs.len());
    println!("coverage={:.6}", result.selection.covered_fraction);
    println!("matches={}", result.matches.len());
    Ok(())
}

fn cmd_basins(d1: &Path, d2: &Path, out_labels: &Path, out_pgm: Option<&Path>) -> CliResult<()> {
    let (g1, g2) = (load_grid(d1)?, load_grid(d2)?);
    let basins = compute_basins(&g1, &g2)?;
    save_label_grid(basins.labels(), basins.size(), out_labels).at(out_labels)?;
    if let Some(path) = out_pgm {
        let size = basins.size();
        let mut bytes = format!("P5\n{} {}\n255\n", size.width, size.height).into_bytes();
        bytes.extend(basins.labels().iter().map(|&l| (l % 256) as u8));
        std::fs::write(path, bytes).at(path)?;
    }
    println!("basins={}", basins.num_basins());
    Ok(())
}

fn load_spec(path: &Path) -> CliResult<SceneSpec> {
    let text = std::fs::read_to_string(path).at(path)?;
    serde_json::from_str(&text).map_err(|source| CliError::Json {
        path: path.to_path_buf(),
        source,
    })
}

#[allow(clippy::too_many_arguments)]
fn cmd_bench(
    scene: &Path,
    k_list: Vec<usize>,
    modes: Vec<Mode>,
    repeat: usize,
    max_iters: usize,
    seed: u64,
    oracle: bool,
    out: &Path,
) -> CliResult<()> {
    let data = generate_scene(&load_spec(scene)?)?;
    let cfg = BenchConfig {
        k_list,
        modes,
        repeat,
        max_iters,
        seed,
        oracle,
    };
    let rows = run_bench(&data.d1, &data.d2, &cfg)?;
    write_bench_csv(&rows, out)?;
    println!("rows={}", rows.len());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_loss(
    pred: &Path,
    gt: &Path,
    conf: Option<&Path>,
    d1: &Path,
    d2: &Path,
    pairs: &Path,
    config: LossConfig,
) -> CliResult<()> {
    config.validate()?;
    let pred_map = load_point_map(pred).at(pred)?;
    let gt_map = load_point_map(gt).at(gt)?;
    let conf_map = match conf {
        Some(path) => load_confidence_map(path).at(path)?,
        None => ConfidenceMap::constant(gt_map.height(), gt_map.width(), 1.0).at(gt)?,
    };
    let (g1, g2) = (load_grid(d1)?, load_grid(d2)?);
    let set = load_correspondences(pairs).at(pairs)?;

    let (losses, report) = regression_loss(&pred_map, &gt_map, config.metric_mode)?;
    let l_conf = confidence_loss(&losses, &conf_map, config.alpha)?;
    let l_match = matching_loss(&g1, &g2, &set, config.tau)?;
    let l_total = total_loss(l_conf, l_match, config.beta);
    println!("l_conf={l_conf}");
    println!("l_match={l_match}");
    println!("l_total={l_total}");
    println!("z={}", report.z);
    println!("z_gt={}", report.z_gt);
    println!("metric={}", config.metric_mode);
    Ok(())
}

fn template_spec() -> SceneSpec {
    let mut spec = SceneSpec::square(256, 24, 16.0, 1)
        .with_sigma(0.05)
        .with_warp(WarpSpec {
            translation: [6.5, -3.25],
            scale: 1.02,
            homography: None,
        })
        .with_detail(DetailLayer {
            length_scale: 3.0,
            amplitude: 0.5,
            region: [64.0, 64.0, 192.0, 192.0],
        });
    spec.canvas = [300, 300];
    spec
}

fn cmd_gen_scene(spec_path: &Path, out_dir: &Path, c2f: bool) -> CliResult<()> {
    let spec = load_spec(spec_path)?;
    std::fs::create_dir_all(out_dir).at(out_dir)?;
    let scene = Scene::new(spec.clone())?;
    let data = generate_scene(&spec)?;
    let file = |name: &str| out_dir.join(name);
    save_descriptor_grid(&data.d1, file("d1.dgrd")).at(&file("d1.dgrd"))?;
    save_descriptor_grid(&data.d2, file("d2.dgrd")).at(&file("d2.dgrd"))?;
    save_point_map(&data.x1, file("x1.pmap")).at(&file("x1.pmap"))?;
    save_point_map(&data.x2, file("x2.pmap")).at(&file("x2.pmap"))?;
    let ones = ConfidenceMap::constant(data.x1.height(), data.x1.width(), 1.0).at(spec_path)?;
    save_confidence_map(&ones, file("c1.conf")).at(&file("c1.conf"))?;
    save_correspondences_text(&data.gt, file("gt.txt")).at(&file("gt.txt"))?;
    println!("gt_pairs={}", data.gt.len());

    if c2f {
        let mut grids = BTreeMap::new();
        let mut lists = Vec::new();
        for (image, n) in [(ImageId::First, 1), (ImageId::Second, 2)] {
            let size = scene.view_size(image);
            let coarse = scene.sample_window(image, &Window::full(size), coarse_resolution(size, WINDOW_SIZE))?;
            let name = format!("coarse{n}.dgrd");
            save_descriptor_grid(&coarse, file(&name)).at(&file(&name))?;
            let windows = make_window_grid(size.width, size.height, WINDOW_SIZE, WINDOW_OVERLAP);
            for (i, w) in windows.iter().enumerate() {
                let name = format!("w{n}_{i}.dgrd");
                let grid = scene.sample_window(image, w, w.size())?;
                save_descriptor_grid(&grid, file(&name)).at(&file(&name))?;
                grids.insert(grid_key(image, w), PathBuf::from(name));
            }
            lists.push((size, windows));
        }
        let as_list = |ws: &[Window]| ws.iter().map(|w| [w.x0, w.y0, w.x1, w.y1]).collect();
        let manifest = ManifestFile {
            version: manifest::MANIFEST_VERSION,
            size1: Some([lists[0].0.width, lists[0].0.height]),
            size2: Some([lists[1].0.width, lists[1].0.height]),
            coarse: CoarsePaths {
                d1: "coarse1.dgrd".into(),
                d2: "coarse2.dgrd".into(),
            },
            windows1: as_list(&lists[0].1),
            windows2: as_list(&lists[1].1),
            grids,
        };
        let path = file("manifest.json");
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        write_text(&path, &text)?;
        println!("manifest={}", path.display());
    }
    Ok(())
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Match {
            d1,
            d2,
            mode,
            k,
            max_iters,
            out,
            stats,
        } => cmd_match(&d1, &d2, mode, k, max_iters, &out, stats.as_deref()),
        Command::C2f {
            manifest,
            k,
            max_iters,
            coverage,
            out,
        } => cmd_c2f(&manifest, k, max_iters, coverage, &out),
        Command::Basins {
            d1,
            d2,
            out_labels,
            out_pgm,
        } => cmd_basins(&d1, &d2, &out_labels, out_pgm.as_deref()),
        Command::Bench {
            scene,
            k_list,
            modes,
            repeat,
            max_iters,
            seed,
            no_oracle,
            out,
        } => cmd_bench(&scene, k_list, modes, repeat, max_iters, seed, !no_oracle, &out),
        Command::Loss {
            pred,
            gt,
            conf,
            d1,
            d2,
            pairs,
            alpha,
            beta,
            tau,
            metric,
        } => cmd_loss(
            &pred,
            &gt,
            conf.as_deref(),
            &d1,
            &d2,
            &pairs,
            LossConfig {
                alpha,
                beta,
                tau,
                metric_mode: metric,
            },
        ),
        Command::GenScene {
            spec,
            out_dir,
            c2f,
            template,
        } => {
            if template {
                let text = serde_json::to_string_pretty(&template_spec()).expect("spec serializes");
                let mut stdout = std::io::stdout().lock();
                writeln!(stdout, "{text}").at(Path::new("<stdout>"))?;
                return Ok(());
            }
            cmd_gen_scene(&spec.unwrap(), &out_dir.unwrap(), c2f)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = configure_threads().and_then(|()| run(cli));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
