use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use osr_core::data::{load_dataset, save_dataset, split};
use osr_core::report::{evaluate as evaluate_all, render_accuracy_table};
use osr_core::sweep::{curve_csv, sweep as run_sweep, threshold_curve, AlphaRounding};
use osr_core::synth::{generate, SynthSpec};
use osr_core::{
    closed_set_prediction, CalibrationParams, EmbeddingRecord, EvalMode, Execution, FitMode,
    LabelMap, Method, OpenMaxModel, Split, SweepSpec, WeightForm,
};
use serde::Serialize;

use crate::{
    CalibrateArgs, EvaluateArgs, PredictArgs, Rounding, SelectOn, SplitArg, SweepArgs, SynthArgs,
    TauMode, WeightFormArg,
};

const SWEEP_FORMAT_VERSION: &str = "osr-sweep/1";

impl From<WeightFormArg> for WeightForm {
    fn from(w: WeightFormArg) -> Self {
        match w {
            WeightFormArg::Cdf => WeightForm::Cdf,
            WeightFormArg::PaperLiteral => WeightForm::PaperLiteral,
        }
    }
}

impl From<TauMode> for FitMode {
    fn from(t: TauMode) -> Self {
        match t {
            TauMode::Zero => FitMode::Zero,
            TauMode::Shift => FitMode::Shift,
        }
    }
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Self {
        match s {
            SplitArg::Train => Split::Train,
            SplitArg::Eval => Split::Eval,
            SplitArg::Test => Split::Test,
        }
    }
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_file(path, text)
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn load_labels(path: &Path) -> Result<LabelMap> {
    LabelMap::load(path).with_context(|| format!("loading label map {}", path.display()))
}

fn load_records(path: &Path, labels: &LabelMap) -> Result<Vec<EmbeddingRecord>> {
    let (records, _) = load_dataset(path, labels)
        .with_context(|| format!("loading embeddings {}", path.display()))?;
    Ok(records)
}

/// Loads a model, checks it against an optional label map file and applies a
/// weight-form override.
fn load_model(
    path: &Path,
    labels: Option<&Path>,
    weight_form: Option<WeightFormArg>,
) -> Result<OpenMaxModel> {
    let model =
        OpenMaxModel::load(path).with_context(|| format!("loading model {}", path.display()))?;
    if let Some(labels) = labels {
        if load_labels(labels)? != *model.label_map() {
            return Err(osr_core::Error::InvalidLabelMap(format!(
                "{} does not match the model's label map",
                labels.display()
            )))
            .context("checking label map");
        }
    }
    Ok(match weight_form {
        Some(w) => model.with_weight_form(w.into()),
        None => model,
    })
}

fn split_nonempty(records: &[EmbeddingRecord], which: Split) -> Result<Vec<&EmbeddingRecord>> {
    let selected = split(records, which);
    if selected.is_empty() {
        return Err(osr_core::Error::EmptyEvaluation)
            .with_context(|| format!("no {which} records"));
    }
    Ok(selected)
}

pub fn synth(args: &SynthArgs) -> Result<()> {
    let spec = match &args.spec {
        Some(path) => {
            let text =
                fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            serde_json::from_str::<SynthSpec>(&text)
                .with_context(|| format!("parsing {}", path.display()))?
        }
        None => SynthSpec::standard(args.seed),
    };
    let data = generate(&spec)?;
    create_dir(&args.out_dir)?;
    save_dataset(
        args.out_dir.join("embeddings.jsonl"),
        &data.label_map,
        &data.records,
    )?;
    data.label_map.save(args.out_dir.join("labels.json"))?;
    write_json(&args.out_dir.join("synth_spec.json"), &spec)?;
    println!(
        "wrote {} records ({} known classes, {} unknown clusters) to {}",
        data.records.len(),
        spec.known.len(),
        spec.unknown.len(),
        args.out_dir.display()
    );
    Ok(())
}

pub fn calibrate(args: &CalibrateArgs) -> Result<()> {
    let labels = load_labels(&args.labels)?;
    let records = load_records(&args.embeddings, &labels)?;
    let train = split(&records, Split::Train);
    let predictions: Vec<usize> = train
        .iter()
        .map(|r| closed_set_prediction(&r.activations))
        .collect();
    let params = CalibrationParams::new(args.alpha, args.tail)
        .with_weight_form(args.weight_form.into())
        .with_fit_mode(args.tau_mode.into());
    let model =
        OpenMaxModel::calibrate(&labels, &train, &predictions, params).context("calibrating")?;
    create_dir(&args.out_dir)?;
    let path = args.out_dir.join("model.json");
    model.save(&path)?;

    let width = labels
        .names()
        .iter()
        .map(String::len)
        .max()
        .unwrap_or(0)
        .max("Class".len());
    let mut table = format!(
        "{:<width$}  {:>5}  {:>12}  {:>12}  {:>12}\n",
        "Class", "n_fit", "tau", "lambda", "kappa"
    );
    for (name, w) in labels.names().iter().zip(model.weibulls()) {
        let _ = writeln!(
            table,
            "{name:<width$}  {:>5}  {:>12.6}  {:>12.6}  {:>12.6}",
            w.n_fit, w.tau, w.lambda, w.kappa
        );
    }
    print!("{table}");
    println!("wrote {}", path.display());
    Ok(())
}

pub fn predict(args: &PredictArgs, exec: Execution) -> Result<()> {
    let model = load_model(&args.model, args.labels.as_deref(), args.weight_form)?;
    let records = load_records(&args.embeddings, model.label_map())?;
    let selected = split_nonempty(&records, args.split.into())?;
    let predictions = model.predict_batch(&selected, args.epsilon, exec)?;
    let mut out = String::new();
    for p in &predictions {
        out.push_str(&serde_json::to_string(p)?);
        out.push('\n');
    }
    create_dir(&args.out_dir)?;
    let path = args.out_dir.join("predictions.jsonl");
    write_file(&path, out)?;
    let rejected = predictions.iter().filter(|p| p.rejected).count();
    println!(
        "{} predictions, {rejected} rejected; wrote {}",
        predictions.len(),
        path.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct EvaluateOutput<'a> {
    config: &'a EvaluateArgs,
    alpha: usize,
    tail: usize,
    weight_form: WeightForm,
    fit_mode: FitMode,
    report: &'a osr_core::report::ExperimentReport,
}

pub fn evaluate(args: &EvaluateArgs, exec: Execution) -> Result<()> {
    let model = load_model(&args.model, args.labels.as_deref(), args.weight_form)?;
    let records = load_records(&args.embeddings, model.label_map())?;
    let selected = split_nonempty(&records, args.split.into())?;
    let (report, _) = evaluate_all(&model, &selected, args.epsilon, exec)?;

    create_dir(&args.out_dir)?;
    write_json(
        &args.out_dir.join("report.json"),
        &EvaluateOutput {
            config: args,
            alpha: model.alpha(),
            tail: model.tail_size(),
            weight_form: model.weight_form(),
            fit_mode: model.fit_mode(),
            report: &report,
        },
    )?;
    let name = format!(
        "alpha={} tail={} epsilon={}",
        model.alpha(),
        model.tail_size(),
        args.epsilon
    );
    let accuracy_table = render_accuracy_table(&[(name.as_str(), &report)]);
    let mut text = accuracy_table.clone();
    for mode in EvalMode::ALL {
        let r = report.report(mode);
        let _ = write!(
            text,
            "\n[{}] accuracy {:.4}\n{}",
            mode.as_str(),
            r.accuracy,
            r.render_class_table()
        );
        write_file(
            &args
                .out_dir
                .join(format!("confusion_{}.csv", mode.as_str())),
            r.confusion.to_csv(model.label_map())?,
        )?;
    }
    write_file(&args.out_dir.join("report.txt"), &text)?;
    print!("{accuracy_table}");
    Ok(())
}

#[derive(Serialize)]
struct SweepOutput<'a> {
    format_version: &'static str,
    config: &'a SweepArgs,
    alphas: &'a [usize],
    tails: &'a [usize],
    epsilons: &'a [f64],
    calibrations: usize,
    best: &'a [osr_core::sweep::SweepRow],
}

pub fn sweep(args: &SweepArgs, exec: Execution) -> Result<()> {
    let labels = load_labels(&args.labels)?;
    let records = load_records(&args.embeddings, &labels)?;
    let rounding = match args.alpha_rounding {
        Rounding::Up => AlphaRounding::Up,
        Rounding::Down => AlphaRounding::Down,
    };
    let mut spec = SweepSpec::standard(labels.len(), rounding);
    if !args.alpha.is_empty() {
        spec.alphas = args.alpha.clone();
    }
    if !args.tail.is_empty() {
        spec.tails = args.tail.clone();
    }
    if !args.epsilon.is_empty() {
        spec.epsilons = args.epsilon.clone();
    }
    spec.weight_form = args.weight_form.into();
    spec.fit_mode = args.tau_mode.into();

    let target = match args.select_on {
        SelectOn::Test => {
            eprintln!(
                "warning: selecting hyperparameters on the test split reports oracle-selected accuracy; \
                 use --select-on eval for an unbiased estimate"
            );
            Split::Test
        }
        SelectOn::Eval => Split::Eval,
    };
    let train = split(&records, Split::Train);
    let scored = split_nonempty(&records, target)?;
    let predictions: Vec<usize> = train
        .iter()
        .map(|r| closed_set_prediction(&r.activations))
        .collect();
    let result = run_sweep(&labels, &train, &scored, &predictions, &spec, exec)?;

    create_dir(&args.out_dir)?;
    write_file(&args.out_dir.join("sweep.csv"), result.to_csv()?)?;
    let mut alphas = spec.alphas.clone();
    let mut tails = spec.tails.clone();
    let mut epsilons = spec.epsilons.clone();
    alphas.sort_unstable();
    alphas.dedup();
    tails.sort_unstable();
    tails.dedup();
    epsilons.sort_by(f64::total_cmp);
    epsilons.dedup();
    write_json(
        &args.out_dir.join("best.json"),
        &SweepOutput {
            format_version: SWEEP_FORMAT_VERSION,
            config: args,
            alphas: &alphas,
            tails: &tails,
            epsilons: &epsilons,
            calibrations: result.calibrations,
            best: &result.best,
        },
    )?;

    let curves = args.out_dir.join("curves");
    create_dir(&curves)?;
    if let Ok(curve) = threshold_curve(&result, Method::SoftmaxThreshold, None, None) {
        write_file(&curves.join("softmax-threshold.csv"), curve_csv(&curve))?;
    }
    for (alpha, tail) in result.openmax_keys() {
        if let Ok(curve) =
            threshold_curve(&result, Method::OpenmaxThreshold, Some(alpha), Some(tail))
        {
            let name = format!("openmax-threshold_alpha{alpha}_tail{tail}.csv");
            write_file(&curves.join(name), curve_csv(&curve))?;
        }
    }

    for row in &result.best {
        let config = match (row.alpha, row.tail) {
            (Some(a), Some(t)) => format!("alpha={a} tail={t} "),
            _ => String::new(),
        };
        println!(
            "best {}: {config}epsilon={} accuracy={:.4}",
            row.method,
            row.epsilon,
            row.accuracy.unwrap_or_default()
        );
    }
    println!(
        "{} calibrations; wrote {}",
        result.calibrations,
        args.out_dir.display()
    );
    for method in &spec.methods {
        if result.best_for(*method).is_none() {
            bail!(osr_core::Error::Unfittable(format!(
                "every {method} configuration failed"
            )));
        }
    }
    Ok(())
}
