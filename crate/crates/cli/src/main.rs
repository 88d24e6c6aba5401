//! Command-line front end: load specs, run analyses, emit reports and plot
//! data.  Consumers are batch runs and test harnesses; every command is
//! deterministic given its inputs and the declared seed.
//!
//! Exit codes: 0 success, 1 mathematical failure (non-involutive system,
//! ill-posed cross-section, failing goldens), 2 input error.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use ijets_core::catalog;
use ijets_core::chains::{ChainKind, ChainProblem};
use ijets_core::normalform::{self, CrossSection, FrameProblem};
use ijets_core::scalar::Scalar;
use ijets_core::{DifferentialSystem, SectionJet};

#[derive(Parser)]
#[command(name = "ijets", about = "Involutivity, moving frames and normal forms for pseudo-group actions on jets", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Json,
    Csv,
}

#[derive(Subcommand)]
enum Command {
    /// Symbol indices, Cartan characters and the involutivity verdict.
    Involutivity {
        #[arg(long, conflicts_with = "spec")]
        catalog: Option<String>,
        /// Path to a system JSON file.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        order: Option<usize>,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Analyze the entry's reduced system instead of its determining
        /// system.
        #[arg(long)]
        reduced: bool,
    },
    /// Reduced determining equations of a catalog pseudo-group.
    Reduce {
        #[arg(long)]
        catalog: String,
        #[arg(long, default_value_t = 2)]
        order: usize,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Normal-form power series of a target section.
    NormalForm {
        #[arg(long)]
        catalog: String,
        /// Target section jet as JSON; defaults to the entry's built-in
        /// demonstration target.
        #[arg(long)]
        target: Option<PathBuf>,
        #[arg(long, default_value_t = 5)]
        order: usize,
        #[arg(long)]
        cross_section: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write the coefficient-growth diagnostic (|u_J|^{1/|J|} per
        /// order) to this CSV path.
        #[arg(long)]
        growth_out: Option<PathBuf>,
    },
    /// Moving-frame values for a target section.
    Frame {
        #[arg(long)]
        catalog: String,
        #[arg(long)]
        target: Option<PathBuf>,
        #[arg(long, default_value_t = 4)]
        order: usize,
        #[arg(long)]
        cross_section: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Integrate the chain determining ODEs and revalidate against the
    /// normal-form pipeline.
    Chain {
        #[arg(long, default_value = "running")]
        catalog: String,
        #[arg(long, default_value_t = 0.06)]
        span: f64,
        #[arg(long, default_value_t = 1e-4)]
        step: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Recompute every published golden value and diff.
    Goldens {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Probe delta-regularity with random linear changes of variables.
    ProbeDelta {
        #[arg(long)]
        catalog: String,
        #[arg(long)]
        order: Option<usize>,
        #[arg(long, default_value_t = 12)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Probe the entry's reduced system instead of its determining
        /// system.
        #[arg(long)]
        reduced: bool,
    },
    /// Write all built-in catalog entries as JSON files.
    DumpCatalog {
        #[arg(long, default_value = "catalog")]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn load_entry(id: &str) -> anyhow::Result<catalog::CatalogEntry> {
    catalog::load(id).map_err(|e| anyhow::anyhow!("{e}"))
}

fn entry_system(
    entry: &catalog::CatalogEntry,
    reduced: bool,
    order: Option<usize>,
) -> anyhow::Result<DifferentialSystem> {
    let sys = if reduced || entry.determining.is_none() {
        catalog::reduced_system(entry, order.unwrap_or(2))
            .map_err(|e| anyhow::anyhow!("{e}"))?
            .system
    } else {
        entry.determining.clone().unwrap()
    };
    let target_order = order.unwrap_or(sys.order).max(sys.order);
    sys.prolonged_to(target_order)
        .map_err(|e| anyhow::anyhow!("{e}"))
}

fn write_or_print(out: &Option<PathBuf>, text: &str) -> anyhow::Result<()> {
    match out {
        Some(path) => std::fs::write(path, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn load_target(
    entry: &catalog::CatalogEntry,
    path: &Option<PathBuf>,
    order: usize,
) -> anyhow::Result<BTreeMap<ijets_core::IndexedCoordinate, ijets_core::Rat>> {
    match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)?;
            let value: serde_json::Value = serde_json::from_str(&text)?;
            let jet = SectionJet::from_json(&value)
                .ok_or_else(|| anyhow::anyhow!("malformed section jet file"))?;
            Ok(jet.jets)
        }
        None => {
            if entry.id == "running" {
                Ok(catalog::running_target_jets(order))
            } else {
                // generic small-rational demonstration target honoring the
                // entry's open conditions via its regular point
                let p = entry.regular_point.p;
                let q = entry.regular_point.q;
                let mut jets = BTreeMap::new();
                for k in 0..=order {
                    for j in ijets_core::MultiIndex::all_of_order(p as u8, k) {
                        for dep in 1..=q as u8 {
                            let v = entry.regular_point.u_value(dep, &j);
                            jets.insert(ijets_core::IndexedCoordinate::new(dep, j.clone()), v);
                        }
                    }
                }
                Ok(jets)
            }
        }
    }
}

fn load_cross_section(
    entry: &catalog::CatalogEntry,
    path: &Option<PathBuf>,
) -> anyhow::Result<CrossSection> {
    match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)?;
            let value: serde_json::Value = serde_json::from_str(&text)?;
            CrossSection::from_json(&value)
                .ok_or_else(|| anyhow::anyhow!("malformed cross-section file"))
        }
        None => entry
            .cross_section
            .clone()
            .ok_or_else(|| anyhow::anyhow!("entry {} has no cross-section", entry.id)),
    }
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::Involutivity {
            catalog: id,
            spec,
            order,
            format,
            out,
            reduced,
        } => {
            let sys = match (&id, &spec) {
                (Some(id), None) => entry_system(&load_entry(id)?, reduced, order)?,
                (None, Some(path)) => {
                    let text = std::fs::read_to_string(path)?;
                    let value: serde_json::Value = serde_json::from_str(&text)?;
                    let sys = DifferentialSystem::from_json(&value)
                        .ok_or_else(|| anyhow::anyhow!("malformed system file"))?;
                    sys.prolonged_to(order.unwrap_or(sys.order).max(sys.order))
                        .map_err(|e| anyhow::anyhow!("{e}"))?
                }
                _ => anyhow::bail!("exactly one of --catalog or --spec is required"),
            };
            let n = order.unwrap_or(sys.order);
            let report = sys.symbol(n).map_err(|e| anyhow::anyhow!("{e}"))?;
            let verdict = sys.involutivity().map_err(|e| anyhow::anyhow!("{e}"))?;
            let text = match format {
                Format::Text => format!(
                    "indices {}; characters {}; involutive: {}\n",
                    join(&report.indices),
                    join(&report.characters),
                    if verdict.involutive { "yes" } else { "no" }
                ),
                Format::Json => serde_json::to_string_pretty(&serde_json::json!({
                    "order": n,
                    "indices": report.indices,
                    "characters": report.characters,
                    "rank": report.rank,
                    "parametric": report.parametric,
                    "weighted_index_sum": verdict.weighted_sum,
                    "prolonged_rank": verdict.prolonged_rank,
                    "involutive": verdict.involutive,
                }))? + "\n",
                Format::Csv => report.to_csv(),
            };
            write_or_print(&out, &text)?;
            Ok(if verdict.involutive {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            })
        }
        Command::Reduce {
            catalog: id,
            order,
            format,
            out,
        } => {
            let entry = load_entry(&id)?;
            let red = catalog::reduced_system(&entry, order).map_err(|e| anyhow::anyhow!("{e}"))?;
            let text = match format {
                Format::Json => {
                    let mut v = red.system.to_json();
                    v["kind"] = serde_json::json!("reduced");
                    v["section"] = serde_json::json!({
                        "base": entry.regular_point.base.iter()
                            .map(ijets_core::scalar::rat_to_string).collect::<Vec<_>>(),
                        "seed": entry.regular_point.seed,
                    });
                    serde_json::to_string_pretty(&v)? + "\n"
                }
                _ => {
                    let mut s = String::new();
                    for eq in &red.system.equations {
                        s.push_str(&format!("{} = {}\n", eq.lhs, eq.rhs));
                    }
                    s
                }
            };
            write_or_print(&out, &text)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::NormalForm {
            catalog: id,
            target,
            order,
            cross_section,
            format,
            out,
            growth_out,
        } => {
            let entry = load_entry(&id)?;
            let red = catalog::reduced_system(&entry, order).map_err(|e| anyhow::anyhow!("{e}"))?;
            let cs = load_cross_section(&entry, &cross_section)?;
            let problem = FrameProblem {
                red: &red,
                cs: &cs,
                n_f: entry.n_f.unwrap_or(1),
                closed_forms: &entry.closed_forms,
            };
            let jets = load_target(&entry, &target, order)?;
            let q = red.system.ctx.q;
            let (csv, json) = match normalform::solve_frame(&problem, &jets, order) {
                Ok((_, s)) => {
                    let assembled = s.to_series(q);
                    let json: Vec<_> = assembled.iter().map(|x| x.to_json()).collect();
                    (s.to_csv(), serde_json::to_string_pretty(&json)? + "\n")
                }
                Err(normalform::FrameError::Eval(ijets_core::expr::EvalError::IrrationalRoot)) => {
                    eprintln!("note: irrational frame root; falling back to floats");
                    let fjets: BTreeMap<_, f64> =
                        jets.iter().map(|(c, v)| (c.clone(), v.to_f64())).collect();
                    let (_, s) = normalform::solve_frame_float(&problem, &fjets, order)
                        .map_err(|e| anyhow::anyhow!("{e}"))?;
                    (s.to_csv(), String::from("[]\n"))
                }
                Err(e) => return Err(anyhow::anyhow!("{e}")),
            };
            let text = match format {
                Format::Csv | Format::Text => csv.clone(),
                Format::Json => json,
            };
            write_or_print(&out, &text)?;
            if let Some(gpath) = growth_out {
                let rows = growth_rows(&csv, order);
                std::fs::write(gpath, rows)?;
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Frame {
            catalog: id,
            target,
            order,
            cross_section,
            format,
            out,
        } => {
            let entry = load_entry(&id)?;
            let red = catalog::reduced_system(&entry, order).map_err(|e| anyhow::anyhow!("{e}"))?;
            let cs = load_cross_section(&entry, &cross_section)?;
            let problem = FrameProblem {
                red: &red,
                cs: &cs,
                n_f: entry.n_f.unwrap_or(1),
                closed_forms: &entry.closed_forms,
            };
            let jets = load_target(&entry, &target, order)?;
            let (frame, _) =
                normalform::solve_frame(&problem, &jets, order).map_err(|e| anyhow::anyhow!("{e}"))?;
            let text = match format {
                Format::Json => {
                    let obj: serde_json::Map<String, serde_json::Value> = frame
                        .values
                        .iter()
                        .map(|(c, v)| {
                            (c.to_string(), serde_json::json!(ijets_core::scalar::rat_to_string(v)))
                        })
                        .collect();
                    serde_json::to_string_pretty(&serde_json::Value::Object(obj))? + "\n"
                }
                _ => {
                    let mut s = String::new();
                    for (c, v) in &frame.values {
                        s.push_str(&format!("{c} = {}\n", ijets_core::scalar::rat_to_string(v)));
                    }
                    s
                }
            };
            write_or_print(&out, &text)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Chain {
            catalog: id,
            span,
            step,
            out,
        } => {
            let (prob, report) = match id.as_str() {
                "running" => {
                    let rep = catalog::running_chain_revalidation(6)
                        .map_err(|e| anyhow::anyhow!("{e}"))?;
                    let target = catalog::running_target_series(6);
                    let u_yy0 = target
                        .to_float()
                        .derivative(2)
                        .derivative(2)
                        .eval(&[0.0, 0.0]);
                    let prob = ChainProblem {
                        kind: ChainKind::JetTranslation {
                            c: ijets_core::SeriesF::zero(1, 4),
                            d: ijets_core::SeriesF::zero(1, 4),
                        },
                        target: target.to_float(),
                        initial: vec![0.0, 1.0 / u_yy0.sqrt(), 0.0],
                        span,
                        step,
                    };
                    (prob, rep)
                }
                "ex10" => {
                    let rep = catalog::ex10_chain_revalidation()
                        .map_err(|e| anyhow::anyhow!("{e}"))?;
                    let mut target = catalog::running_target_series(3);
                    target.set(
                        ijets_core::MultiIndex::empty(),
                        ijets_core::scalar::rat_int(2),
                    );
                    let prob = ChainProblem {
                        kind: ChainKind::ReciprocalScaling { y0: 0.0 },
                        target: target.to_float(),
                        initial: vec![0.0],
                        span,
                        step,
                    };
                    (prob, rep)
                }
                other => anyhow::bail!("no chain problem for catalog entry {other}"),
            };
            let traj =
                ijets_core::chains::integrate_chain(&prob).map_err(|e| anyhow::anyhow!("{e}"))?;
            if let Some(path) = out {
                std::fs::write(path, traj.to_csv())?;
            }
            println!(
                "chain over [0, {span}] at step {step}: max deviation {:.3e} (phantom {:.3e}, on-section {:.3e})",
                report.max_deviation(),
                report.max_phantom_deviation,
                report.max_on_section_deviation
            );
            Ok(if report.max_deviation() < 1e-6 {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            })
        }
        Command::Goldens { seed } => {
            let checks = catalog::run_all_goldens(seed);
            let mut failed = 0;
            for c in &checks {
                println!(
                    "[{}] {} — {}",
                    if c.passed { "PASS" } else { "FAIL" },
                    c.name,
                    c.detail
                );
                if !c.passed {
                    failed += 1;
                }
            }
            println!("{} checks, {} failed", checks.len(), failed);
            Ok(if failed == 0 {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            })
        }
        Command::ProbeDelta {
            catalog: id,
            order,
            trials,
            seed,
            reduced,
        } => {
            let entry = load_entry(&id)?;
            let sys = entry_system(&entry, reduced, order)?;
            let probe = sys
                .delta_regularity_probe(trials, seed)
                .map_err(|e| anyhow::anyhow!("{e}"))?;
            println!(
                "weighted index sum {} -> max over {} trials {}; delta-irregular: {}",
                probe.original,
                trials,
                probe.max_found,
                if probe.delta_irregular { "yes" } else { "no" }
            );
            Ok(if probe.delta_irregular {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            })
        }
        Command::DumpCatalog { out } => {
            catalog::dump_to(&out).map_err(|e| anyhow::anyhow!("{e}"))?;
            println!("wrote {} entries to {}", catalog::ids().len(), out.display());
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn join(values: &[u64]) -> String {
    values
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(" ")
}

/// Growth diagnostic from an emitted slot CSV: per order, max |value|^{1/k}.
fn growth_rows(slot_csv: &str, order: usize) -> String {
    let mut max_per_order = vec![0.0f64; order + 1];
    for line in slot_csv.lines().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 4 {
            continue;
        }
        let k = cols[1].split_whitespace().count();
        if k == 0 || k > order {
            continue;
        }
        let v = parse_rational_or_float(cols[3]);
        max_per_order[k] = max_per_order[k].max(v.abs().powf(1.0 / k as f64));
    }
    let mut out = String::from("order,max_coeff_root\n");
    for (k, m) in max_per_order.iter().enumerate().skip(1) {
        out.push_str(&format!("{k},{m:.12e}\n"));
    }
    out
}

fn parse_rational_or_float(s: &str) -> f64 {
    if let Some(r) = ijets_core::scalar::rat_from_str(s) {
        return r.to_f64();
    }
    s.parse().unwrap_or(0.0)
}
