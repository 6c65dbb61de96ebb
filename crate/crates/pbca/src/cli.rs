//! Command-line surface.
//!
//! Subcommands: `synth`, `train`, `select`, `eval`, `compare`, `attention`,
//! `acf`. Exit codes: 0 success, 2 usage/config error, 3 data error,
//! 4 numeric error.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use crate::data::{
    self, build_dataset, load_csv, synth_periodic, RawSeries, Schema, SynthSpec, WindowedDataset,
};
use crate::error::{Error, Result};
use crate::metrics;
use crate::model::{
    load_checkpoint, save_checkpoint, select_pi, train, ForecastConfig, ForecastModel, Variant,
};

const USAGE: &str = "\
usage: pbca <command> [options]

commands:
  synth      --spec <file> --out <csv>
  train      --data <csv> --config <file> [--variant V] [--preset NAME] --out <checkpoint>
  select     --data <csv> --config <file> --variants <v1,v2,..> [--preset NAME] --out <checkpoint>
  eval       --model <checkpoint> --data <csv>
  compare    --model-a <ckpt> --model-b <ckpt> --data <csv> [--per-point]
  attention  --model <checkpoint> --data <csv> --out <csv>
  acf        --data <csv> --max-lag <int> [--column NAME] --out <csv>

variants: A pi1 pi2 pi3 multi-A multi-pi1 multi-pi2
presets:  PSE PW NAB AQ AEP OLD
";

pub fn run(args: Vec<String>) -> i32 {
    match dispatch(&args) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}

fn dispatch(args: &[String]) -> Result<()> {
    let command = args
        .first()
        .ok_or_else(|| Error::Config(format!("missing command\n{USAGE}")))?;
    let flags = Flags::parse(&args[1..])?;
    match command.as_str() {
        "synth" => cmd_synth(&flags),
        "train" => cmd_train(&flags),
        "select" => cmd_select(&flags),
        "eval" => cmd_eval(&flags),
        "compare" => cmd_compare(&flags),
        "attention" => cmd_attention(&flags),
        "acf" => cmd_acf(&flags),
        "help" | "--help" | "-h" => {
            println!("{USAGE}");
            Ok(())
        }
        other => Err(Error::Config(format!("unknown command '{other}'\n{USAGE}"))),
    }
}

struct Flags {
    values: HashMap<String, String>,
    switches: Vec<String>,
}

impl Flags {
    fn parse(args: &[String]) -> Result<Flags> {
        let mut values = HashMap::new();
        let mut switches = Vec::new();
        let mut i = 0;
        while i < args.len() {
            let arg = &args[i];
            let key = arg
                .strip_prefix("--")
                .ok_or_else(|| Error::Config(format!("unexpected argument '{arg}'\n{USAGE}")))?;
            if key == "per-point" {
                switches.push(key.to_string());
                i += 1;
                continue;
            }
            let value = args
                .get(i + 1)
                .ok_or_else(|| Error::Config(format!("flag --{key} needs a value")))?;
            if values.insert(key.to_string(), value.clone()).is_some() {
                return Err(Error::Config(format!("flag --{key} given twice")));
            }
            i += 2;
        }
        Ok(Flags { values, switches })
    }

    fn require(&self, key: &str) -> Result<&str> {
        self.values
            .get(key)
            .map(|s| s.as_str())
            .ok_or_else(|| Error::Config(format!("missing required flag --{key}\n{USAGE}")))
    }

    fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(|s| s.as_str())
    }

    fn has_switch(&self, key: &str) -> bool {
        self.switches.iter().any(|s| s == key)
    }
}

fn parse_synth_spec(text: &str) -> Result<SynthSpec> {
    let mut length = None;
    let mut components = Vec::new();
    let mut noise_stddev = 0.0;
    let mut trend_slope = 0.0;
    let mut seed = 1u64;
    for (lineno, raw_line) in text.lines().enumerate() {
        let line = raw_line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::Config(format!("line {}: expected 'key = value'", lineno + 1))
        })?;
        let key = key.trim();
        let value = value.trim();
        let bad = |what: &str| Error::Config(format!("line {}: invalid {what} '{value}'", lineno + 1));
        match key {
            "length" => length = Some(value.parse().map_err(|_| bad("length"))?),
            "components" => {
                for part in value.split(',') {
                    let part = part.trim();
                    if part.is_empty() {
                        continue;
                    }
                    let (period, amplitude) = part
                        .split_once(':')
                        .ok_or_else(|| bad("component (want period:amplitude)"))?;
                    components.push((
                        period.trim().parse().map_err(|_| bad("period"))?,
                        amplitude.trim().parse().map_err(|_| bad("amplitude"))?,
                    ));
                }
            }
            "noise_stddev" => noise_stddev = value.parse().map_err(|_| bad("noise_stddev"))?,
            "trend_slope" => trend_slope = value.parse().map_err(|_| bad("trend_slope"))?,
            "seed" => seed = value.parse().map_err(|_| bad("seed"))?,
            other => {
                return Err(Error::Config(format!(
                    "line {}: unknown key '{other}'",
                    lineno + 1
                )))
            }
        }
    }
    let length = length.ok_or_else(|| Error::Config("missing required key 'length'".into()))?;
    Ok(SynthSpec { length, components, noise_stddev, trend_slope, seed })
}

fn cmd_synth(flags: &Flags) -> Result<()> {
    let spec_path = PathBuf::from(flags.require("spec")?);
    let out = PathBuf::from(flags.require("out")?);
    let text = std::fs::read_to_string(&spec_path)?;
    let spec = parse_synth_spec(&text)?;
    let series = synth_periodic(&spec)?;
    data::write_series_csv(&out, &series)?;
    println!("wrote\t{}\trows\t{}", out.display(), series.len());
    Ok(())
}

fn config_from_flags(flags: &Flags) -> Result<ForecastConfig> {
    let preset = match flags.get("preset") {
        Some(name) => Some(data::preset(name).ok_or_else(|| {
            Error::Config(format!("unknown preset '{name}' (PSE|PW|NAB|AQ|AEP|OLD)"))
        })?),
        None => None,
    };
    let path = PathBuf::from(flags.require("config")?);
    let text = std::fs::read_to_string(&path)?;
    ForecastConfig::from_text(&text, preset)
}

fn schema_for(config: &ForecastConfig, data_path: &Path) -> Result<Schema> {
    match &config.columns {
        Some(cols) => Ok(Schema {
            columns: cols.clone(),
            missing_token: config.missing_token.clone(),
            timestamp_column: config.timestamp_column.clone(),
        }),
        None => {
            let mut schema = Schema::from_header(data_path)?;
            schema.missing_token = config.missing_token.clone();
            if config.timestamp_column.is_some() {
                schema.timestamp_column = config.timestamp_column.clone();
            }
            Ok(schema)
        }
    }
}

/// Align the config with the data actually read: univariate variants consume
/// only the target column; the multivariate variants consume every column.
fn resolve_variables(mut config: ForecastConfig, raw: RawSeries) -> Result<(ForecastConfig, RawSeries)> {
    let univariate = !config.variant.per_variable_attention()
        && !matches!(config.variant, Variant::Pi3);
    if univariate && raw.variables() > 1 {
        let target = config.target_variable;
        if target >= raw.variables() {
            return Err(Error::Config(format!(
                "target_variable {target} out of range for {} columns",
                raw.variables()
            )));
        }
        let name = raw.names[target].clone();
        let rows = raw.rows.iter().map(|r| vec![r[target]]).collect();
        let selected = RawSeries {
            names: vec![name.clone()],
            rows,
            metadata: raw.metadata.clone(),
        };
        config.columns = Some(vec![name]);
        config.target_variable = 0;
        config.k = 1;
        config.validate()?;
        return Ok((config, selected));
    }
    config.k = raw.variables();
    config.columns = Some(raw.names.clone());
    if config.target_variable >= config.k {
        return Err(Error::Config(format!(
            "target_variable {} out of range for {} columns",
            config.target_variable, config.k
        )));
    }
    config.validate()?;
    Ok((config, raw))
}

fn prepare_dataset(
    config: ForecastConfig,
    data_path: &Path,
) -> Result<(ForecastConfig, WindowedDataset)> {
    let schema = schema_for(&config, data_path)?;
    let raw = load_csv(data_path, &schema)?;
    let (config, raw) = resolve_variables(config, raw)?;
    let dataset = build_dataset(
        &raw,
        config.t,
        config.t_prime,
        config.target_variable,
        config.normalization,
        config.strict_windows,
    )?;
    Ok((config, dataset))
}

fn print_report(report: &crate::model::TrainReport) {
    println!("epoch\ttrain_loss\tval_mse");
    for (i, e) in report.epochs.iter().enumerate() {
        println!("{i}\t{}\t{}", e.train_loss, e.val_mse);
    }
    match report.best_epoch {
        Some(b) => println!("best_epoch\t{b}"),
        None => println!("best_epoch\t-"),
    }
    println!("wall_time_secs\t{:.3}", report.wall_time_secs);
}

fn cmd_train(flags: &Flags) -> Result<()> {
    let data_path = PathBuf::from(flags.require("data")?);
    let out = PathBuf::from(flags.require("out")?);
    let mut config = config_from_flags(flags)?;
    if let Some(v) = flags.get("variant") {
        config.variant = Variant::parse(v)?;
    }
    let (config, dataset) = prepare_dataset(config, &data_path)?;
    let (model, report) = train(&config, &dataset)?;
    print_report(&report);
    save_checkpoint(&model, &out)?;
    println!("checkpoint\t{}", out.display());
    Ok(())
}

fn cmd_select(flags: &Flags) -> Result<()> {
    let data_path = PathBuf::from(flags.require("data")?);
    let out = PathBuf::from(flags.require("out")?);
    let base = config_from_flags(flags)?;
    let variant_list = flags.require("variants")?;
    let variants: Vec<Variant> = variant_list
        .split(',')
        .map(|v| Variant::parse(v.trim()))
        .collect::<Result<_>>()?;
    if variants.is_empty() {
        return Err(Error::Config("--variants list is empty".into()));
    }

    // all candidates must share the data view so validation errors pair up
    let mut candidates: Vec<ForecastModel> = Vec::new();
    let mut shared: Option<WindowedDataset> = None;
    let mut shared_k = None;
    for &variant in &variants {
        let mut config = base.clone();
        config.variant = variant;
        let (config, dataset) = prepare_dataset(config, &data_path)?;
        match shared_k {
            None => {
                shared_k = Some(config.k);
                shared = Some(dataset.clone());
            }
            Some(k) if k == config.k => {}
            Some(k) => {
                return Err(Error::Config(format!(
                    "variants disagree on variable count ({k} vs {}); \
                     select within one family",
                    config.k
                )))
            }
        }
        let (model, report) = train(&config, &dataset)?;
        println!("trained\t{variant}\tepochs\t{}", report.epochs.len());
        candidates.push(model);
    }
    let dataset = shared.expect("at least one variant");
    let (winner, scores) = select_pi(&candidates, &dataset)?;

    println!("variant\tval_mse");
    for (model, score) in candidates.iter().zip(&scores) {
        println!("{}\t{}", model.config.variant, score);
    }
    println!("selected\t{}", candidates[winner].config.variant);
    save_checkpoint(&candidates[winner], &out)?;
    println!("checkpoint\t{}", out.display());
    Ok(())
}

fn test_predictions(
    model: &ForecastModel,
    dataset: &WindowedDataset,
) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    let test = dataset.test_examples()?;
    let preds = model.predict(test)?;
    let truths = test.iter().map(|e| e.target.clone()).collect();
    Ok((preds, truths))
}

fn cmd_eval(flags: &Flags) -> Result<()> {
    let model = load_checkpoint(Path::new(flags.require("model")?))?;
    let data_path = PathBuf::from(flags.require("data")?);
    let (config, dataset) = prepare_dataset(model.config.clone(), &data_path)?;
    if config.k != model.config.k {
        return Err(Error::Data(format!(
            "data resolves to {} variables but the model consumes {}",
            config.k, model.config.k
        )));
    }
    let (preds, truths) = test_predictions(&model, &dataset)?;
    println!("mse\t{}", metrics::mse(&preds, &truths)?);
    println!("smape\t{}", metrics::smape(&preds, &truths)?);
    Ok(())
}

fn cmd_compare(flags: &Flags) -> Result<()> {
    let model_a = load_checkpoint(Path::new(flags.require("model-a")?))?;
    let model_b = load_checkpoint(Path::new(flags.require("model-b")?))?;
    let data_path = PathBuf::from(flags.require("data")?);

    let ca = &model_a.config;
    let cb = &model_b.config;
    let aligned = ca.t == cb.t
        && ca.t_prime == cb.t_prime
        && ca.columns == cb.columns
        && ca.target_variable == cb.target_variable
        && ca.normalization == cb.normalization
        && ca.strict_windows == cb.strict_windows;
    if !aligned {
        return Err(Error::Contract(
            "models were trained on different data views; errors cannot be paired".into(),
        ));
    }

    let (_, dataset) = prepare_dataset(ca.clone(), &data_path)?;
    let (preds_a, truths) = test_predictions(&model_a, &dataset)?;
    let (preds_b, _) = test_predictions(&model_b, &dataset)?;

    let (errors_a, errors_b) = if flags.has_switch("per-point") {
        (
            metrics::per_point_squared_errors(&preds_a, &truths)?,
            metrics::per_point_squared_errors(&preds_b, &truths)?,
        )
    } else {
        (
            metrics::per_example_mse(&preds_a, &truths)?,
            metrics::per_example_mse(&preds_b, &truths)?,
        )
    };
    let result = metrics::paired_ttest(&errors_a, &errors_b, 0.05)?;
    println!("t\t{}", result.t);
    println!("df\t{}", result.df);
    println!("p\t{}", result.p);
    println!("significant\t{}", if result.significant { "*" } else { "-" });
    Ok(())
}

fn cmd_attention(flags: &Flags) -> Result<()> {
    let model = load_checkpoint(Path::new(flags.require("model")?))?;
    let data_path = PathBuf::from(flags.require("data")?);
    let out = PathBuf::from(flags.require("out")?);
    let (_, dataset) = prepare_dataset(model.config.clone(), &data_path)?;
    let profile = metrics::average_attention(&model, dataset.test_examples()?)?;
    let mut text = String::from("lag,mean_weight\n");
    for (idx, w) in profile.mean_weights.iter().enumerate() {
        text.push_str(&format!("{},{w}\n", idx + 1));
    }
    std::fs::write(&out, text)?;
    println!("wrote\t{}\targmax_lag\t{}", out.display(), profile.argmax_lag());
    Ok(())
}

fn cmd_acf(flags: &Flags) -> Result<()> {
    let data_path = PathBuf::from(flags.require("data")?);
    let out = PathBuf::from(flags.require("out")?);
    let max_lag_raw = flags.require("max-lag")?;
    let max_lag: usize = max_lag_raw
        .parse()
        .map_err(|_| Error::Config(format!("invalid --max-lag '{max_lag_raw}'")))?;
    let schema = Schema::from_header(&data_path)?;
    let raw = load_csv(&data_path, &schema)?;
    let clean = data::interpolate_missing(&raw)?;
    let column = match flags.get("column") {
        Some(name) => clean
            .names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::Config(format!("no column named '{name}'")))?,
        None => 0,
    };
    let r = metrics::autocorrelation(clean.variable(column), max_lag)?;
    let mut text = String::from("lag,acf\n");
    for (lag, v) in r.iter().enumerate() {
        text.push_str(&format!("{lag},{v}\n"));
    }
    std::fs::write(&out, text)?;
    println!("wrote\t{}", out.display());
    Ok(())
}
