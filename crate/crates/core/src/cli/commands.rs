//! Subcommand implementations.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::io::{load_dataset, read_text, save_report, write_atomic};
use super::{Cli, CliError, Command, GlobalOpts};
use crate::cfg::{extract_loops, relation_graph, CfgDoc, Loop, RelationGraph};
use crate::disasm::{build_bin_cfg, parse_disasm, BinFunction, CpiTable, Instruction, Isa};
use crate::instlib::{
    build_library, model_cycles, BuildOptions, InstructionLibrary, ModelCycles, OperatorCycles,
};
use crate::mapper::{map_function, MappingDoc};
use crate::modelparse::{load_model, lower_layers};
use crate::predictor::{
    error_percentiles, evaluate, few_shot_split, predict, subsample_fit, EvalRow, LinearPredictor,
    Target,
};
use crate::srcfeat::{parse_src_cfg, SrcFunction};

pub fn execute(cli: &Cli) -> Result<(), CliError> {
    let g = &cli.global;
    match &cli.command {
        Command::ParseDisasm { input, out } => parse_disasm_cmd(g, input, out.as_deref()),
        Command::ExtractLoops {
            src,
            bin,
            function,
            out,
        } => extract_loops_cmd(
            g,
            src.as_deref(),
            bin.as_deref(),
            function.as_deref(),
            out.as_deref(),
        ),
        Command::Map {
            src,
            bin,
            function,
            out,
        } => map_cmd(g, src, bin, function.as_deref(), out.as_deref()),
        Command::BuildLib { manifest, cpi, out } => {
            let opts = BuildOptions {
                seed: g.seed,
                cpi_override: cpi.clone(),
                isa_override: g.isa.clone(),
            };
            let lib = build_library(manifest, &opts).map_err(|e| CliError::Data(e.to_string()))?;
            save_report(out, &lib)
        }
        Command::Estimate {
            model,
            lib,
            cpi,
            out,
        } => estimate_cmd(model, lib, cpi.as_deref(), out.as_deref()),
        Command::Fit {
            dataset,
            target,
            seeds,
            out,
        } => {
            let d = load_dataset(dataset, *target)?;
            let p = subsample_fit(&d.samples, *seeds, *target, g.seed)
                .map_err(|e| CliError::data(dataset, e))?;
            emit(out.as_deref(), &p)
        }
        Command::Predict {
            predictor,
            cycles,
            model,
            lib,
        } => predict_cmd(predictor, *cycles, model.as_deref(), lib.as_deref()),
        Command::Eval {
            dataset,
            target,
            shots,
            seeds,
            predictor,
            out,
        } => eval_cmd(
            g,
            dataset,
            *target,
            *shots,
            *seeds,
            predictor.as_deref(),
            out,
        ),
    }
}

fn emit(out: Option<&Path>, value: &impl Serialize) -> Result<(), CliError> {
    match out {
        Some(p) => save_report(p, value),
        None => {
            println!(
                "{}",
                serde_json::to_string_pretty(value).expect("report serialization cannot fail")
            );
            Ok(())
        }
    }
}

fn isa(g: &GlobalOpts) -> Result<Isa, CliError> {
    match &g.isa {
        Some(p) => Isa::from_json(&read_text(p)?).map_err(|e| CliError::data(p, e)),
        None => Ok(Isa::for_arch(g.arch)),
    }
}

/// parse-disasm output: instructions plus the block CFG of every function.
#[derive(Debug, Serialize, Deserialize)]
struct BinDoc {
    architecture: String,
    skipped_lines: usize,
    functions: Vec<BinFunctionDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
struct BinFunctionDoc {
    symbol: String,
    instructions: Vec<Instruction>,
    /// `[start, end)` instruction ranges, one per CFG node.
    #[serde(default)]
    blocks: Vec<[usize; 2]>,
    #[serde(default)]
    cfg: Option<CfgDoc>,
    #[serde(default)]
    external_edges: Vec<(u64, u64)>,
}

fn parse_disasm_cmd(g: &GlobalOpts, input: &Path, out: Option<&Path>) -> Result<(), CliError> {
    let isa = isa(g)?;
    let listing = parse_disasm(&read_text(input)?).map_err(|e| CliError::data(input, e))?;
    let functions = listing
        .functions
        .iter()
        .map(|f| {
            let b = build_bin_cfg(f, &isa);
            BinFunctionDoc {
                symbol: f.symbol.clone(),
                instructions: f.instructions.clone(),
                blocks: b.blocks.iter().map(|r| [r.start, r.end]).collect(),
                cfg: Some(b.cfg.to_doc()),
                external_edges: b.external_edges.clone(),
            }
        })
        .collect();
    emit(
        out,
        &BinDoc {
            architecture: isa.name.clone(),
            skipped_lines: listing.skipped_lines,
            functions,
        },
    )
}

/// Functions of a raw listing or of parse-disasm output.
fn read_bin(path: &Path) -> Result<Vec<BinFunction>, CliError> {
    let text = read_text(path)?;
    if text.trim_start().starts_with('{') {
        let doc: BinDoc = serde_json::from_str(&text).map_err(|e| CliError::data(path, e))?;
        Ok(doc
            .functions
            .into_iter()
            .map(|f| BinFunction {
                symbol: f.symbol,
                instructions: f.instructions,
            })
            .collect())
    } else {
        Ok(parse_disasm(&text)
            .map_err(|e| CliError::data(path, e))?
            .functions)
    }
}

fn pick_function(
    path: &Path,
    functions: Vec<BinFunction>,
    wanted: Option<&str>,
    fallback: Option<&str>,
) -> Result<BinFunction, CliError> {
    let names = || {
        functions
            .iter()
            .map(|f| f.symbol.as_str())
            .collect::<Vec<_>>()
            .join(", ")
    };
    if let Some(w) = wanted {
        return functions
            .iter()
            .find(|f| f.symbol == w)
            .cloned()
            .ok_or_else(|| CliError::data(path, format!("no function <{w}>; found {}", names())));
    }
    if let Some(f) = fallback.and_then(|n| functions.iter().find(|f| f.symbol == n)) {
        return Ok(f.clone());
    }
    if functions.len() == 1 {
        return Ok(functions.into_iter().next().expect("one function"));
    }
    Err(CliError::Usage(format!(
        "{}: several functions ({}); choose one with --function",
        path.display(),
        names()
    )))
}

fn read_src(path: &Path) -> Result<SrcFunction, CliError> {
    parse_src_cfg(&read_text(path)?).map_err(|e| CliError::data(path, e))
}

#[derive(Serialize)]
struct LoopsReport {
    function: String,
    loops: Vec<Loop>,
    relation_graph: RelationGraph,
}

fn extract_loops_cmd(
    g: &GlobalOpts,
    src: Option<&Path>,
    bin: Option<&Path>,
    function: Option<&str>,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let (name, cfg) = match (src, bin) {
        (Some(p), _) => {
            let f = read_src(p)?;
            (f.name, f.cfg)
        }
        (None, Some(p)) => {
            let f = pick_function(p, read_bin(p)?, function, None)?;
            let b = build_bin_cfg(&f, &isa(g)?);
            (f.symbol, b.cfg)
        }
        (None, None) => return Err(CliError::Usage("give --src or --bin".into())),
    };
    let loops = extract_loops(&cfg);
    let relation_graph = relation_graph(&loops);
    emit(
        out,
        &LoopsReport {
            function: name,
            loops,
            relation_graph,
        },
    )
}

fn map_cmd(
    g: &GlobalOpts,
    src: &Path,
    bin: &Path,
    function: Option<&str>,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let s = read_src(src)?;
    let b = pick_function(bin, read_bin(bin)?, function, Some(&s.name))?;
    let result = map_function(&s, &b, &isa(g)?, g.seed)
        .map_err(|e| CliError::Data(format!("{} vs {}: {e}", src.display(), bin.display())))?;
    if result.ambiguous {
        log::warn!("mapping for {} is ambiguous", s.name);
    }
    emit(out, &MappingDoc::new(s.name.clone(), &result))
}

fn load_library(path: &Path, cpi: Option<&Path>) -> Result<InstructionLibrary, CliError> {
    let mut lib =
        InstructionLibrary::from_json(&read_text(path)?).map_err(|e| CliError::data(path, e))?;
    if let Some(c) = cpi {
        lib.cpi = CpiTable::from_json(&read_text(c)?).map_err(|e| CliError::data(c, e))?;
    }
    Ok(lib)
}

fn model_estimate(
    model: &Path,
    lib: &InstructionLibrary,
) -> Result<(String, ModelCycles), CliError> {
    let m = load_model(&read_text(model)?).map_err(|e| CliError::data(model, e))?;
    let ops = lower_layers(&m).map_err(|e| CliError::data(model, e))?;
    let cycles = model_cycles(&ops, lib).map_err(|e| CliError::data(model, e))?;
    Ok((m.name, cycles))
}

#[derive(Serialize)]
struct EstimateReport {
    model: String,
    total_cycles: u64,
    operators: Vec<OperatorCycles>,
}

fn estimate_cmd(
    model: &Path,
    lib: &Path,
    cpi: Option<&Path>,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let lib = load_library(lib, cpi)?;
    let (name, cycles) = model_estimate(model, &lib)?;
    println!("model {name}: {} cycles", cycles.total);
    for (i, op) in cycles.operators.iter().enumerate() {
        let kernels: Vec<&str> = op.kernels.iter().map(|k| k.kernel.as_str()).collect();
        println!(
            "  {i:>3} {:<15} {:>14}  {}",
            op.op_type,
            op.cycles,
            kernels.join(",")
        );
    }
    if let Some(p) = out {
        save_report(
            p,
            &EstimateReport {
                model: name,
                total_cycles: cycles.total,
                operators: cycles.operators,
            },
        )?;
    }
    Ok(())
}

fn read_predictor(path: &Path) -> Result<LinearPredictor, CliError> {
    let p: LinearPredictor =
        serde_json::from_str(&read_text(path)?).map_err(|e| CliError::data(path, e))?;
    if !(p.a.is_finite() && p.b.is_finite()) {
        return Err(CliError::data(path, "coefficients must be finite"));
    }
    Ok(p)
}

fn predict_cmd(
    predictor: &Path,
    cycles: Option<u64>,
    model: Option<&Path>,
    lib: Option<&Path>,
) -> Result<(), CliError> {
    let p = read_predictor(predictor)?;
    let cycles = match (cycles, model, lib) {
        (Some(c), _, _) => c,
        (None, Some(m), Some(l)) => model_estimate(m, &load_library(l, None)?)?.1.total,
        _ => {
            return Err(CliError::Usage(
                "give --cycles or --model with --lib".into(),
            ))
        }
    };
    let v = predict(&p, cycles);
    let (unit, milli) = match p.target {
        Target::Energy => ("J", "mJ"),
        Target::Latency => ("s", "ms"),
    };
    println!(
        "{}: {v:e} {unit} ({:.3} {milli}) at {cycles} cycles",
        p.target,
        v * 1e3
    );
    Ok(())
}

#[derive(Serialize)]
struct EvalSummary {
    target: Target,
    seed: u64,
    shots: Option<usize>,
    a: f64,
    b: f64,
    train: Vec<String>,
    n_test: usize,
    skipped_rows: usize,
    mean_error: f64,
    percentiles: BTreeMap<String, f64>,
    predictor: LinearPredictor,
}

fn eval_cmd(
    g: &GlobalOpts,
    dataset: &Path,
    target: Target,
    shots: usize,
    seeds: usize,
    predictor: Option<&Path>,
    out: &Path,
) -> Result<(), CliError> {
    let d = load_dataset(dataset, target)?;
    let (p, train, test, shots) = match predictor {
        Some(pp) => {
            let p = read_predictor(pp)?;
            if p.target != target {
                return Err(CliError::data(
                    pp,
                    format!("predictor targets {}, not {target}", p.target),
                ));
            }
            (p, Vec::new(), d.samples.clone(), None)
        }
        None => {
            if shots >= d.samples.len() {
                return Err(CliError::data(
                    dataset,
                    format!(
                        "{} samples leave nothing to test after {shots} shots",
                        d.samples.len()
                    ),
                ));
            }
            let (train, test) = few_shot_split(&d.samples, shots, g.seed);
            let p = subsample_fit(&train, seeds, target, g.seed)
                .map_err(|e| CliError::data(dataset, e))?;
            (p, train, test, Some(shots))
        }
    };
    if test.is_empty() {
        return Err(CliError::data(dataset, "no samples to evaluate"));
    }
    let rows = evaluate(&p, &test);
    let errors: Vec<f64> = rows.iter().map(|r| r.relative_error).collect();
    let ps = [50.0, 90.0, 95.0, 100.0];
    let values = error_percentiles(&errors, &ps).map_err(|e| CliError::data(dataset, e))?;
    let percentiles = ps
        .iter()
        .zip(values)
        .map(|(p, v)| (format!("p{p}"), v))
        .collect();

    std::fs::create_dir_all(out).map_err(|e| CliError::data(out, e))?;
    write_atomic(&out.join("eval_errors.csv"), error_csv(&rows).as_bytes())?;
    save_report(
        &out.join("eval_summary.json"),
        &EvalSummary {
            target,
            seed: g.seed,
            shots,
            a: p.a,
            b: p.b,
            train: train.iter().map(|s| s.model_id.clone()).collect(),
            n_test: rows.len(),
            skipped_rows: d.skipped,
            mean_error: errors.iter().sum::<f64>() / errors.len() as f64,
            percentiles,
            predictor: p,
        },
    )
}

fn error_csv(rows: &[EvalRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "model_id",
        "cycles",
        "measured",
        "predicted",
        "relative_error_pct",
    ])
    .expect("in-memory write");
    for r in rows {
        w.write_record([
            r.model_id.clone(),
            r.cycles.to_string(),
            r.measured.to_string(),
            r.predicted.to_string(),
            r.relative_error.to_string(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv output is UTF-8")
}
