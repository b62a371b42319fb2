//! Command-line front end: JSON in, machine-readable JSON verification
//! reports out. Exit code 0 on pass/success, 1 on verified-FAIL verdicts,
//! 2 on input errors.

mod dto;

use clap::{Parser, Subcommand};
use cpdil::dilate::{
    classify, dilate_row_contraction, superproduct_of_triple, two_param_markov_dilation,
    RowContraction,
};
use cpdil::gallery;
use cpdil::numkit::Tolerance;
use cpdil::perm::{all_maximal_chains, inversions, sigma_f, IndexFunction};
use cpdil::systems::{check_exchange, product_from_flips, GridCap};
use dto::*;
use serde::Serialize;
use serde_json::json;
use std::collections::BTreeMap;
use std::io::Read;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "cpdil",
    about = "Finite-dimensional CP-semigroup dilation toolkit",
    version
)]
struct Cli {
    /// Relative rank threshold (rank_rel × σ_max).
    #[arg(long, default_value_t = 1e-9, global = true)]
    tol_rank: f64,
    /// Relative equality threshold (Frobenius).
    #[arg(long, default_value_t = 1e-8, global = true)]
    tol_eq: f64,
    /// Seed for all randomized checks.
    #[arg(long, default_value_t = 0, global = true)]
    seed: u64,
    /// Output target; "-" streams to standard output.
    #[arg(long, default_value = "-", global = true)]
    out: String,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// GNS construction of a CP map: canonical multiplicities and the cyclic
    /// vector.
    Gns { input: String },
    /// Canonical minimal Kraus family (cardinality = Choi rank).
    KrausMin { input: String },
    /// Unitalization of a contractive CP map.
    Unitalize { input: String },
    /// Strong-commutation test for a pair of CP maps.
    StrongCommute { input: String },
    /// Detailed exchange conditions of a flip family.
    CheckExchange { input: String },
    /// Build the flip-generated product system at a grid cap and validate it.
    BuildProduct {
        input: String,
        #[arg(long, value_delimiter = ',')]
        cap: Vec<usize>,
    },
    /// The N0² Markov dilation of a commuting Markov pair, with diagnostics.
    TwoParamDilation {
        input: String,
        #[arg(long, value_delimiter = ',')]
        cap: Vec<usize>,
    },
    /// Truncated coisometric dilation of a row contraction.
    DilateRow {
        input: String,
        #[arg(long, default_value_t = 3)]
        level: usize,
    },
    /// Weak/strong/good/Markov classification of a dilation triple.
    ClassifyTriple {
        input: String,
        #[arg(long, value_delimiter = ',')]
        cap: Vec<usize>,
    },
    /// The superproduct system of a dilation triple.
    Superproduct {
        input: String,
        #[arg(long, value_delimiter = ',')]
        cap: Vec<usize>,
    },
    /// Run a named example verifier from the gallery.
    VerifyExample {
        name: String,
        /// Parameter C for the Bhat example.
        #[arg(long)]
        param_c: Option<f64>,
        /// Trial count for randomized examples.
        #[arg(long, default_value_t = 200)]
        trials: usize,
    },
    /// The nondecreasing partially-order-preserving permutation of a pattern.
    PermSigma {
        #[arg(long, value_delimiter = ',')]
        values: Vec<usize>,
    },
    /// All maximal admissible chains of a pattern.
    PermChains {
        #[arg(long, value_delimiter = ',')]
        values: Vec<usize>,
        #[arg(long, default_value_t = 10_000)]
        max: usize,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let tol = match Tolerance::new(cli.tol_rank, cli.tol_eq) {
        Ok(t) => t,
        Err(e) => return input_error(&e.to_string()),
    };
    match run(&cli, &tol) {
        Ok(Outcome { value, pass }) => {
            if let Err(e) = emit(&cli.out, &value) {
                return input_error(&e);
            }
            if pass {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(msg) => input_error(&msg),
    }
}

fn input_error(msg: &str) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(2)
}

struct Outcome {
    value: serde_json::Value,
    pass: bool,
}

fn ok<T: Serialize>(value: &T) -> Result<Outcome, String> {
    Ok(Outcome {
        value: serde_json::to_value(value).map_err(|e| e.to_string())?,
        pass: true,
    })
}

fn verdict<T: Serialize>(value: &T, pass: bool) -> Result<Outcome, String> {
    Ok(Outcome {
        value: serde_json::to_value(value).map_err(|e| e.to_string())?,
        pass,
    })
}

fn read_input(path: &str) -> Result<String, String> {
    if path == "-" {
        let mut buf = String::new();
        std::io::stdin()
            .read_to_string(&mut buf)
            .map_err(|e| e.to_string())?;
        Ok(buf)
    } else {
        std::fs::read_to_string(path).map_err(|e| format!("{path}: {e}"))
    }
}

/// Strict parse with a pointer path to the offending field.
fn parse<T: serde::de::DeserializeOwned>(raw: &str) -> Result<T, String> {
    let de = &mut serde_json::Deserializer::from_str(raw);
    serde_path_to_error::deserialize(de).map_err(|e| format!("at {}: {}", e.path(), e.inner()))
}

fn emit(out: &str, value: &serde_json::Value) -> Result<(), String> {
    let text = serde_json::to_string_pretty(value).map_err(|e| e.to_string())? + "\n";
    if out == "-" {
        print!("{text}");
        Ok(())
    } else {
        std::fs::write(out, text).map_err(|e| format!("{out}: {e}"))
    }
}

fn parse_cap(cap: &[usize]) -> Result<GridCap, String> {
    GridCap::new(cap.to_vec()).map_err(|e| e.to_string())
}

fn run(cli: &Cli, tol: &Tolerance) -> Result<Outcome, String> {
    match &cli.command {
        Command::Gns { input } => {
            let dto: CpMapDto = parse(&read_input(input)?)?;
            let map = dto.to_map(tol)?;
            let gns = map.gns(tol).map_err(|e| e.to_string())?;
            ok(&json!({
                "schema": "gns",
                "version": VERSION,
                "mult": gns.corr.mult(),
                "cyclic": element_to_dto(&gns.cyclic),
            }))
        }
        Command::KrausMin { input } => {
            let dto: CpMapDto = parse(&read_input(input)?)?;
            let map = dto.to_map(tol)?;
            let min = map.minimal_kraus(tol).map_err(|e| e.to_string())?;
            ok(&CpMapDto::from_map(&min))
        }
        Command::Unitalize { input } => {
            let dto: CpMapDto = parse(&read_input(input)?)?;
            let map = dto.to_map(tol)?;
            let uni = map.unitalize(tol).map_err(|e| e.to_string())?;
            ok(&CpMapDto::from_map(&uni))
        }
        Command::StrongCommute { input } => {
            let dto: CpPairDto = parse(&read_input(input)?)?;
            let (t, s) = dto.to_maps(tol)?;
            let dec = cpdil::corr::strongly_commute(&t, &s, tol).map_err(|e| e.to_string())?;
            let witness = match &dec.witness {
                None => json!(null),
                Some(cpdil::corr::StrongCommuteWitness::Dimension { block, ef, fe }) => json!({
                    "kind": "dimension",
                    "block": [block.0, block.1],
                    "ef_mult": ef,
                    "fe_mult": fe,
                }),
                Some(cpdil::corr::StrongCommuteWitness::Gram(r)) => json!({
                    "kind": "gram-residual",
                    "residual": r,
                }),
            };
            verdict(
                &json!({
                    "schema": "strong-commute",
                    "version": VERSION,
                    "commutes_strongly": dec.commutes_strongly,
                    "witness": witness,
                }),
                dec.commutes_strongly,
            )
        }
        Command::CheckExchange { input } => {
            let dto: FlipDataDto = parse(&read_input(input)?)?;
            let fd = dto.to_flip_data()?;
            let dec = check_exchange(&fd, tol).map_err(|e| e.to_string())?;
            let witness = dec
                .witness
                .map(|(k, j, i, r)| json!({"triple": [k, j, i], "residual": r}))
                .unwrap_or(json!(null));
            verdict(
                &json!({
                    "schema": "check-exchange",
                    "version": VERSION,
                    "ok": dec.ok,
                    "witness": witness,
                }),
                dec.ok,
            )
        }
        Command::BuildProduct { input, cap } => {
            let dto: FlipDataDto = parse(&read_input(input)?)?;
            let fd = dto.to_flip_data()?;
            let cap = parse_cap(cap)?;
            let sys = product_from_flips(&fd, &cap, tol).map_err(|e| e.to_string())?;
            let summary = system_summary(&sys, tol, vec![]);
            let pass = summary.validation_passed;
            verdict(&summary, pass)
        }
        Command::TwoParamDilation { input, cap } => {
            let dto: CpPairDto = parse(&read_input(input)?)?;
            let (t1, t2) = dto.to_maps(tol)?;
            let cap = parse_cap(cap)?;
            let out = two_param_markov_dilation(&t1, &t2, &cap, tol).map_err(|e| e.to_string())?;
            let summary = system_summary(&out.system, tol, vec![]);
            let spanned =
                cpdil::systems::spanned_subsystem(&out.system, tol).map_err(|e| e.to_string())?;
            let solver = cpdil::systems::product_subsystem_solver(&out.system, tol)
                .map_err(|e| e.to_string())?;
            let pass = summary.validation_passed;
            verdict(
                &json!({
                    "schema": "two-param-dilation",
                    "version": VERSION,
                    "system": summary,
                    "quasi_generic": out.quasi_generic,
                    "generic": out.generic,
                    "spanned_superproduct_proper": spanned.proper,
                    "product_subsystem_complement_dim": solver.q_dim,
                }),
                pass,
            )
        }
        Command::DilateRow { input, level } => {
            let dto: RowContractionDto = parse(&read_input(input)?)?;
            if dto.schema != "row-contraction" {
                return Err(format!(
                    "expected schema \"row-contraction\", got {:?}",
                    dto.schema
                ));
            }
            let ops = dto
                .ops
                .iter()
                .map(matrix_from_dto)
                .collect::<Result<Vec<_>, _>>()?;
            let rc = RowContraction::new(ops, tol).map_err(|e| e.to_string())?;
            let dil = dilate_row_contraction(&rc, *level, tol).map_err(|e| e.to_string())?;
            let triple = dil.induced_triple(tol).map_err(|e| e.to_string())?;
            let cap =
                GridCap::new(vec![level.saturating_sub(1).max(1)]).map_err(|e| e.to_string())?;
            let report = classify(&triple, &cap, tol).map_err(|e| e.to_string())?;
            let interior = dil.interior_coisometry_residual();
            let compression = dil.compression_residual(&rc);
            let pass = interior <= tol.eq_rel && compression <= tol.eq_rel && report.is_strong;
            verdict(
                &json!({
                    "schema": "dilate-row",
                    "version": VERSION,
                    "total_dim": dil.total_dim,
                    "defect_dim": dil.defect_dim,
                    "level": dil.level,
                    "interior_coisometry_residual": interior,
                    "compression_residual": compression,
                    "strong": report.is_strong,
                    "w": dil.w.iter().map(matrix_to_dto).collect::<Vec<_>>(),
                }),
                pass,
            )
        }
        Command::ClassifyTriple { input, cap } => {
            let dto: TripleDto = parse(&read_input(input)?)?;
            let triple = dto.to_triple(tol)?;
            let cap = parse_cap(cap)?;
            let report = classify(&triple, &cap, tol).map_err(|e| e.to_string())?;
            let pass = report.is_dilation;
            verdict(
                &json!({
                    "schema": "classify-triple",
                    "version": VERSION,
                    "is_dilation": report.is_dilation,
                    "is_weak": report.is_weak,
                    "is_strong": report.is_strong,
                    "is_good": report.is_good,
                    "is_markov_dilated": report.is_markov_dilated,
                    "semigroup_residual": report.semigroup_residual,
                    "strong_residuals": report.strong_residuals.iter()
                        .map(|(n, r)| json!({"index": n, "residual": r})).collect::<Vec<_>>(),
                    "good_residuals": report.good_residuals.iter()
                        .map(|(m, n, r)| json!({"left": m, "right": n, "residual": r})).collect::<Vec<_>>(),
                    "endo_probe_residuals": report.endo_probe_residuals,
                }),
                pass,
            )
        }
        Command::Superproduct { input, cap } => {
            let dto: TripleDto = parse(&read_input(input)?)?;
            let triple = dto.to_triple(tol)?;
            let cap = parse_cap(cap)?;
            let sup = superproduct_of_triple(&triple, &cap, tol).map_err(|e| e.to_string())?;
            let mut members = BTreeMap::new();
            for n in cap.indices() {
                members.insert(index_key(&n), sup.system.member(&n).mult().clone());
            }
            ok(&json!({
                "schema": "superproduct",
                "version": VERSION,
                "members": members,
                "is_product": sup.is_product,
                "surjectivity": sup.surjectivity.iter()
                    .map(|(m, n, rank, dim)| json!({"left": m, "right": n, "rank": rank, "dim": dim}))
                    .collect::<Vec<_>>(),
            }))
        }
        Command::VerifyExample {
            name,
            param_c,
            trials,
        } => {
            let report = match name.as_str() {
                "bhat" => gallery::bhat(param_c.unwrap_or(6.0), tol),
                "parrot" => gallery::parrot(*trials, cli.seed, tol),
                "rotation-example" => gallery::rotation_example(tol),
                "flip-example" => gallery::flip_example(tol),
                "nondilatable-semigroup" => gallery::nondilatable_semigroup(tol),
                "three-state-pair" => gallery::three_state_pair(tol),
                "unitalization-pair" => gallery::unitalization_pair(tol),
                "full-algebra-pairs" => gallery::full_algebra_pairs(*trials, cli.seed, tol),
                "three-state-two-param" => gallery::three_state_two_param(tol),
                other => {
                    return Err(format!(
                        "unknown example {other:?}; available: bhat, parrot, \
                         rotation-example, flip-example, nondilatable-semigroup, \
                         three-state-pair, unitalization-pair, full-algebra-pairs, \
                         three-state-two-param"
                    ))
                }
            }
            .map_err(|e| e.to_string())?;
            let dto = ReportDto::from_report(&report);
            let pass = dto.verdict;
            verdict(&dto, pass)
        }
        Command::PermSigma { values } => {
            let f = IndexFunction::from_values(values.clone()).map_err(|e| e.to_string())?;
            ok(&json!({
                "schema": "perm-sigma",
                "version": VERSION,
                "sigma": sigma_f(&f),
                "inversions": inversions(&f),
            }))
        }
        Command::PermChains { values, max } => {
            let f = IndexFunction::from_values(values.clone()).map_err(|e| e.to_string())?;
            let chains = all_maximal_chains(&f, *max).map_err(|e| e.to_string())?;
            ok(&json!({
                "schema": "perm-chains",
                "version": VERSION,
                "count": chains.len(),
                "length": inversions(&f),
                "chains": chains.iter().map(|c| c.positions.clone()).collect::<Vec<_>>(),
            }))
        }
    }
}
