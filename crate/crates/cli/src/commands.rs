use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use moealloc::alloc::{AllocationLaw, Provenance};
use moealloc::fit::{
    extract_rstar_with, fit_loss_law, fit_power_law, fit_sparsity_laws, predict_vs_observed, FitOptions,
    FitReport, MinimizeOptions, PowerLawFit,
};
use moealloc::flops::{flops_ratio, total_flops, FlopsBreakdown, ModelConfig};
use moealloc::planner::{plan_with, preset, LawStore, PlanRequest, StoredLossLaw, PRESETS};
use moealloc::scaling::{LawCoefficients, LawVariant, RTermMode};
use moealloc::{io, optimal_ratio, synth, SparsityLaw, SynthGrid};
use serde::Serialize;

use crate::args::*;
use crate::error::CliError;
use crate::output::{emit, emit_json, write_atomic};

pub struct Context {
    pub law_store: Option<PathBuf>,
}

impl Context {
    fn store(&self) -> Result<LawStore, CliError> {
        match &self.law_store {
            Some(path) => Ok(LawStore::load(path)?),
            None => Ok(LawStore::default()),
        }
    }
}

fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| CliError::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let value = serde_json::from_reader(open(path)?)
        .map_err(|e| moealloc::Error::InvalidInput(format!("{}: {e}", path.display())))?;
    Ok(value)
}

fn update_store(path: &Path, change: impl FnOnce(&mut LawStore)) -> Result<(), CliError> {
    let mut store = LawStore::load_or_default(path)?;
    change(&mut store);
    let text = store.to_json()?;
    write_atomic(path, |w| Ok(w.write_all(text.as_bytes())?))?;
    eprintln!("updated law store {}", path.display());
    Ok(())
}

pub fn run(cmd: Command, ctx: &Context) -> Result<(), CliError> {
    match cmd {
        Command::Flops(a) => flops(a),
        Command::Rstar(a) => rstar(a, ctx),
        Command::SweepExtract(a) => sweep_extract(a),
        Command::FitPowerlaw(a) => fit_powerlaw(a),
        Command::FitSparsity(a) => fit_sparsity(a),
        Command::FitLoss(a) => fit_loss(a),
        Command::Predict(a) => predict(a, ctx),
        Command::Plan(a) => plan(a, ctx),
        Command::Synth(a) => synth_records(a, ctx),
        Command::Preset(a) => show_preset(a),
    }
}

#[derive(Serialize)]
struct FlopsReport {
    config: ModelConfig,
    flops: FlopsBreakdown,
    r: f64,
}

fn flops(a: FlopsArgs) -> Result<(), CliError> {
    let config: ModelConfig = read_json(&a.config)?;
    let flops = total_flops(&config)?;
    let r = flops_ratio(&config)?.r();
    match a.format {
        Format::Json => emit_json(a.out.output.as_deref(), &FlopsReport { config, flops, r }),
        Format::Csv => emit(a.out.output.as_deref(), |w| Ok(io::write_flops(w, &flops)?)),
    }
}

#[derive(Serialize)]
struct RstarReport {
    compute: f64,
    sparsity: Option<f64>,
    law: AllocationLaw,
    r_star: f64,
}

fn rstar(a: RstarArgs, ctx: &Context) -> Result<(), CliError> {
    let law = match (a.alpha_r, a.beta_r, a.sparsity) {
        (Some(alpha), Some(beta), _) => AllocationLaw::new(alpha, beta, Provenance::User)?,
        (_, _, Some(s)) => ctx.store()?.allocation_for(s)?,
        _ => return Err(CliError::Usage("give --sparsity or both --alpha-r and --beta-r".into())),
    };
    let r_star = optimal_ratio(&law, a.compute)?;
    if a.json {
        emit_json(
            None,
            &RstarReport {
                compute: a.compute,
                sparsity: a.sparsity,
                law,
                r_star,
            },
        )
    } else {
        println!("{r_star}");
        Ok(())
    }
}

fn sweep_extract(a: SweepArgs) -> Result<(), CliError> {
    let groups = io::read_sweep(open(&a.input)?)?;
    let obs = extract_rstar_with(&groups, a.tolerance)?;
    emit(a.out.output.as_deref(), |w| Ok(io::write_rstar(w, &obs)?))
}

fn fit_powerlaw(a: PowerlawArgs) -> Result<(), CliError> {
    let (xs, ys) = io::read_columns(open(&a.input)?, &a.x, &a.y)?;
    let fit = fit_power_law(&xs, &ys)?;
    if let Some(path) = &a.write_store {
        let law = AllocationLaw::new(fit.alpha, fit.beta, Provenance::User)?;
        update_store(path, |s| s.allocation_law = Some(law))?;
    }
    emit_json(a.out.output.as_deref(), &fit)
}

#[derive(Serialize)]
struct SparsityReport {
    sparsity_law: SparsityLaw,
    alpha_r_fit: PowerLawFit,
    beta_r_fit: PowerLawFit,
}

fn fit_sparsity(a: SparsityArgs) -> Result<(), CliError> {
    let obs = io::read_sparsity_observations(open(&a.input)?)?;
    let (law, fa, fb) = fit_sparsity_laws(&obs)?;
    if let Some(path) = &a.write_store {
        update_store(path, |s| s.sparsity_law = law)?;
    }
    emit_json(
        a.out.output.as_deref(),
        &SparsityReport {
            sparsity_law: law,
            alpha_r_fit: fa,
            beta_r_fit: fb,
        },
    )
}

fn parse_fixed(specs: &[String]) -> Result<Vec<(String, f64)>, CliError> {
    specs
        .iter()
        .map(|spec| {
            let (name, value) = spec
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("--fix expects NAME=VALUE, got `{spec}`")))?;
            let value: f64 = value
                .trim()
                .parse()
                .map_err(|_| CliError::Usage(format!("--fix value for `{name}` is not a number")))?;
            Ok((name.trim().to_string(), value))
        })
        .collect()
}

fn fit_loss(a: FitLossArgs) -> Result<(), CliError> {
    let records = io::read_records(open(&a.input)?)?;
    let opts = FitOptions {
        variant: match a.variant {
            Variant::Final => LawVariant::Final,
            Variant::Wang => LawVariant::Wang,
            Variant::Abnar => LawVariant::Abnar,
        },
        starts: a.starts,
        full_grid: a.full_grid,
        seed: a.seed,
        holdout_sparsity: a.holdout_sparsity,
        huber_delta: a.huber_delta,
        r_term_mode: match a.r_term {
            RTerm::R => RTermMode::Ratio,
            RTerm::ROver1PlusR => RTermMode::RatioOverOnePlus,
        },
        e_act: a.e_act,
        fixed: parse_fixed(&a.fix)?,
        minimizer: MinimizeOptions {
            max_iter: a.max_iter,
            ..MinimizeOptions::default()
        },
    };
    let report = fit_loss_law(&records, &opts)?;
    eprintln!(
        "fit {} records: objective {:e}, in-sample RMSE {:e}, {}/{} starts converged",
        report.n_records, report.objective, report.in_sample_rmse, report.starts_converged, report.starts_attempted
    );
    if let Some(h) = &report.held_out {
        eprintln!("held-out S = {}: {} records, RMSE {:e}", h.sparsity, h.n_records, h.rmse);
    }
    if let Some(path) = &a.write_store {
        let coefficients = report.coefficients;
        update_store(path, |s| {
            s.loss_law = StoredLossLaw {
                provenance: Provenance::User,
                coefficients,
            }
        })?;
    }
    emit_json(a.out.output.as_deref(), &report)
}

fn coefficients(report: Option<&Path>, ctx: &Context) -> Result<LawCoefficients, CliError> {
    match report {
        Some(path) => {
            let report: FitReport = read_json(path)?;
            Ok(report.coefficients)
        }
        None => Ok(ctx.store()?.loss_law.coefficients),
    }
}

fn predict(a: PredictArgs, ctx: &Context) -> Result<(), CliError> {
    let coef = coefficients(a.report.as_deref(), ctx)?;
    let records = io::read_records(open(&a.input)?)?;
    let table = predict_vs_observed(&coef, &records)?;
    eprintln!(
        "{} records: RMSE {:e}, R^2 {}",
        table.rows.len(),
        table.rmse,
        table.r_squared
    );
    emit(a.out.output.as_deref(), |w| Ok(io::write_predictions(w, &table.rows)?))
}

fn plan(a: PlanArgs, ctx: &Context) -> Result<(), CliError> {
    let store = ctx.store()?;
    let law = match (a.alpha_r, a.beta_r) {
        (Some(alpha), Some(beta)) => Some(AllocationLaw::new(alpha, beta, Provenance::User)?),
        _ => store.allocation_law,
    };
    let req = PlanRequest {
        compute_budget: a.compute,
        tokens: a.tokens,
        sparsity: a.sparsity,
        n_experts: a.experts,
        top_k: a.top_k,
        n_shared_experts: a.shared,
        law,
        d_hidden_seed: a.d_hidden_seed,
        n_layer: a.n_layer,
        n_head: a.n_head,
        n_ctx: a.n_ctx,
        n_vocab: a.n_vocab,
        kv_head_ratio: a.kv_head_ratio,
        use_gqa: a.gqa,
        use_peft: a.peft,
        use_grad_checkpoint: a.grad_checkpoint,
        granularity: a.granularity,
        ratio_tolerance: a.ratio_tolerance,
        budget_tolerance: a.budget_tolerance,
    };
    let loss_law = store.final_loss_law();
    let result = plan_with(&req, &store.sparsity_law, loss_law.as_ref())?;
    if !result.feasible {
        eprintln!(
            "warning: no lattice point meets both tolerances; best candidate has ratio error {:.4} and budget error {:.4}",
            result.ratio_error, result.budget_error
        );
    }
    emit_json(a.out.output.as_deref(), &result)
}

fn synth_records(a: SynthArgs, ctx: &Context) -> Result<(), CliError> {
    let coef = coefficients(a.report.as_deref(), ctx)?;
    let grid: SynthGrid = read_json(&a.grid)?;
    let records = synth(&coef, &grid, a.sigma, a.seed)?;
    emit(a.out.output.as_deref(), |w| Ok(io::write_records(w, &records)?))
}

fn show_preset(a: PresetArgs) -> Result<(), CliError> {
    if a.all {
        return emit_json(None, &PRESETS);
    }
    let label = a.label.as_deref().unwrap_or_default();
    emit_json(None, &preset(label)?)
}
