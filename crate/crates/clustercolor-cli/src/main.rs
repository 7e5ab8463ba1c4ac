//! `clustercolor`: generate instances, run the coloring pipeline, verify colorings, sweep sizes.

mod report;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use clustercolor::acd::AcdLabeling;
use clustercolor::coloring::{run_pipeline, ColoringExport, PartialColoring};
use clustercolor::engine::{BandwidthPolicy, Engine};
use clustercolor::netmodel::{generate_planted, load_instance, save_instance, GeneratorSpec, Instance, ParamSet, Preset, Profile};
use clustercolor::putaside::donation_trace_json;
use clustercolor::verify;

use report::{digest, RunReport};

#[derive(Parser)]
#[command(name = "clustercolor", version, about = "Cluster-graph (Δ+1)-coloring simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a planted instance with its ground truth.
    Generate {
        /// Preset name (planted-cabals, planted-non-cabals, sparse-er, mixed).
        #[arg(long, conflicts_with = "spec")]
        preset: Option<Preset>,
        /// Generator spec as JSON.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long, default_value_t = 2)]
        groups: usize,
        #[arg(long, default_value_t = 256)]
        size: usize,
        /// Machines per cluster.
        #[arg(long, default_value_t = 1)]
        expansion: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the pipeline and write coloring.json, stages.json, ledger.csv and report.json.
    Run {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Check a coloring (and optionally a labeling) against an instance.
    Verify {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long)]
        coloring: PathBuf,
        #[arg(long)]
        labeling: Option<PathBuf>,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Run a preset over doubling group counts and write one CSV row per (size, seed).
    Sweep {
        #[arg(long, default_value = "mixed")]
        preset: Preset,
        #[arg(long, default_value_t = 256)]
        size: usize,
        #[arg(long, default_value_t = 1)]
        min_groups: usize,
        #[arg(long, default_value_t = 8)]
        max_groups: usize,
        #[arg(long, default_value_t = 3)]
        seeds: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(clap::Args)]
struct RunArgs {
    #[arg(long)]
    instance: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Replace the instance's parameters by a named profile.
    #[arg(long)]
    profile: Option<Profile>,
    #[arg(long, default_value = "audit")]
    bandwidth: BandwidthPolicy,
    /// Bandwidth constant: each link carries C_bw·⌈log₂ n⌉ bits per round.
    #[arg(long)]
    c_bw: Option<u32>,
    #[arg(long)]
    retries: Option<u32>,
    /// Output directory for the artifacts.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Where to write report.json (defaults to the output directory).
    #[arg(long)]
    report: Option<PathBuf>,
    /// Validate the instance and stop.
    #[arg(long)]
    dry_run: bool,
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Generate { preset, spec, groups, size, expansion, seed, out } => {
            let spec = match (preset, spec) {
                (_, Some(path)) => serde_json::from_slice::<GeneratorSpec>(&fs::read(&path).with_context(|| format!("reading {}", path.display()))?)?,
                (Some(p), None) => p.spec(groups, size, expansion),
                (None, None) => bail!("give --preset or --spec"),
            };
            let loaded = generate_planted(seed, &spec)?;
            fs::write(&out, save_instance(&loaded.instance, loaded.ground_truth.as_ref()))?;
            println!("wrote {} ({} clusters, {} machines, Δ = {})", out.display(), loaded.instance.num_clusters(), loaded.instance.n(), loaded.instance.delta());
            Ok(true)
        }
        Command::Run { run } => cmd_run(&run),
        Command::Verify { instance, coloring, labeling, report } => {
            let inst = read_instance(&instance)?.1;
            let export: ColoringExport = serde_json::from_slice(&fs::read(&coloring)?)?;
            let phi = PartialColoring::from_export(&inst, &export)?;
            let mut verdicts = vec![verify::check_proper(&inst, &phi), verify::check_total(&inst, &phi, 0..inst.num_clusters())];
            if let Some(path) = labeling {
                let lab = AcdLabeling::from_export(&inst, &serde_json::from_slice(&fs::read(path)?)?)?;
                verdicts.push(verify::check_acd(&inst, &lab, inst.params().epsilon, inst.params().c_sparse));
            }
            for v in &verdicts {
                println!("{:12} {}", v.check, if v.pass { "pass" } else { "FAIL" });
                for w in &v.witnesses {
                    println!("    {w}");
                }
            }
            if let Some(path) = report {
                fs::write(path, serde_json::to_string_pretty(&verdicts)?)?;
            }
            Ok(verdicts.iter().all(|v| v.pass))
        }
        Command::Sweep { preset, size, min_groups, max_groups, seeds, out } => {
            let mut csv = String::from("groups,clusters,machines,delta,seed,h_rounds,g_rounds,fallback_rounds,residual_before_fallback,fallback\n");
            let mut groups = min_groups.max(1);
            while groups <= max_groups {
                for seed in 0..seeds {
                    let inst = generate_planted(seed, &preset.spec(groups, size, 1))?.instance;
                    let mut eng = Engine::new(&inst, seed, BandwidthPolicy::Audit, false);
                    let run = run_pipeline(&mut eng)?;
                    let (g, h) = run.headline_rounds();
                    let finish = run.outcomes.last().expect("fallback stage always runs");
                    csv.push_str(&format!(
                        "{groups},{},{},{},{seed},{h},{g},{},{},{}\n",
                        inst.num_clusters(),
                        inst.n(),
                        inst.delta(),
                        finish.rounds,
                        finish.colored,
                        u8::from(run.fallback_used)
                    ));
                }
                groups *= 2;
            }
            fs::write(&out, csv)?;
            println!("wrote {}", out.display());
            Ok(true)
        }
    }
}

fn read_instance(path: &Path) -> Result<(Vec<u8>, Instance)> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let inst = load_instance(&bytes)?.instance;
    Ok((bytes, inst))
}

fn cmd_run(args: &RunArgs) -> Result<bool> {
    let (bytes, inst) = read_instance(&args.instance)?;
    let mut params = match args.profile {
        Some(p) => ParamSet::for_profile(p, inst.n()),
        None => inst.params().clone(),
    };
    if let Some(c) = args.c_bw {
        params.c_bw = c;
    }
    if let Some(r) = args.retries {
        params.retries = r;
    }
    let inst = inst.with_params(params)?;
    if args.dry_run {
        println!("valid: {} clusters, {} machines, {} H-edges, Δ = {}", inst.num_clusters(), inst.n(), inst.num_edges(), inst.delta());
        return Ok(true);
    }
    let mut eng = Engine::new(&inst, args.seed, args.bandwidth, false);
    let run = run_pipeline(&mut eng)?;
    let ledger = eng.into_ledger();
    let budget = inst.params().bandwidth(inst.n());
    let verdicts = vec![
        verify::check_proper(&inst, &run.coloring),
        verify::check_total(&inst, &run.coloring, 0..inst.num_clusters()),
        verify::audit_bandwidth(&ledger, budget),
    ];
    let report = RunReport::new(digest(&bytes), args.seed, &inst, &run, &ledger, verdicts);

    fs::create_dir_all(&args.out)?;
    let out = |name: &str| args.out.join(name);
    fs::write(out("coloring.json"), serde_json::to_string_pretty(&run.coloring.to_export(&inst))?)?;
    fs::write(out("stages.json"), serde_json::to_string_pretty(&run.outcomes)?)?;
    fs::write(out("labeling.json"), serde_json::to_string_pretty(&run.labeling.to_export(&inst))?)?;
    fs::write(out("ledger.csv"), ledger.to_csv())?;
    fs::write(out("donations.json"), donation_trace_json(run.donations()))?;
    let report_path = args.report.clone().unwrap_or_else(|| out("report.json"));
    fs::write(&report_path, serde_json::to_string_pretty(&report)?)?;

    for v in &report.verdicts {
        println!("{:12} {}", v.check, if v.pass { "pass" } else { "FAIL" });
    }
    println!(
        "H-rounds {} G-rounds {} fallback {} -> {}",
        report.headline.h_rounds,
        report.headline.g_rounds,
        report.headline.fallback_used,
        args.out.display()
    );
    Ok(report.passed())
}
