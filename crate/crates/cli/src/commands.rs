use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde_json::json;
use sha2::{Digest, Sha256};

use mtcascade::calibration::{
    calibrate_pplt, calibrate_qet, select_jdm_samples, JdmSelection, JdmTrainingSet, PolicyThresholds, Provenance,
};
use mtcascade::dataset::read_corpus;
use mtcascade::decider::{train_linear_decider, Decider, Policy, TrainOptions};
use mtcascade::evalharness::{compare_report, difficulty_table, pareto_sweep, prepare, replay_prepared, sweep_to_csv, ReplayReport};
use mtcascade::fsutil::{read_json, write_atomic, write_json};
use mtcascade::ngram::{load_lm, save_lm, train_lm, Smoothing, TokenizerSpec, TrainConfig};
use mtcascade::router::{BackendKind, RouterConfig};
use mtcascade::scoring::{Scorer, ScorerSpec};
use mtcascade::ScoreKind;

use crate::inputs::{
    calibrated_at, common_pair, decider_spec, fill_qe, fill_quality, load_records, load_records_from, scorer_spec,
};
use crate::{
    usage, CalibrateArgs, Command, JdmSelectionArgs, Method, ReplayArgs, ReportArgs, SelectJdmArgs, ServeArgs,
    SmoothingArg, SweepArgs, TokenizerArg, TrainJdmArgs, TrainLmArgs,
};

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::TrainLm(a) => train_lm_cmd(a),
        Command::Calibrate(a) => calibrate(a),
        Command::SelectJdmSamples(a) => select_jdm(a),
        Command::TrainJdm(a) => train_jdm(a),
        Command::Replay(a) => replay(a),
        Command::Sweep(a) => sweep(a),
        Command::Serve(a) => serve(a),
        Command::Report(a) => report(a),
    }
}

fn file_sha256(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn selection(a: &JdmSelectionArgs) -> JdmSelection {
    JdmSelection {
        t1_fraction: a.t1_fraction,
        n_pos: a.n_pos as usize,
        neg_ratio: a.neg_ratio as usize,
        seed: a.seed,
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => Ok(write_atomic(path, text.as_bytes())?),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn train_lm_cmd(a: TrainLmArgs) -> Result<()> {
    if a.smoothing == SmoothingArg::AddK && !(a.k > 0.0 && a.k.is_finite()) {
        usage!("--k must be positive");
    }
    let config = TrainConfig {
        order: a.order as usize,
        tokenizer: match a.tokenizer {
            TokenizerArg::Whitespace => TokenizerSpec::Whitespace,
            TokenizerArg::Character => TokenizerSpec::Character,
        },
        smoothing: match a.smoothing {
            SmoothingArg::Kn => Smoothing::InterpolatedKneserNey,
            SmoothingArg::AddK => Smoothing::AddK { k: a.k },
        },
        min_count: a.min_count,
    };
    let corpus = read_corpus(&a.corpus)?;
    let lm = train_lm(&corpus, &config)?;
    save_lm(&lm, &a.out)?;
    println!(
        "trained order-{} {} model on {} sentences; {} predicted tokens -> {}",
        lm.order(),
        lm.smoothing(),
        corpus.len(),
        lm.predicted_vocab_size(),
        a.out.display()
    );
    Ok(())
}

fn calibrate(a: CalibrateArgs) -> Result<()> {
    let input: PathBuf = match (a.method, &a.corpus, &a.records) {
        (Method::Pplt, Some(corpus), _) => {
            if a.lm.is_none() {
                usage!("--method pplt needs --lm");
            }
            if a.pair.is_none() && a.base.is_none() {
                usage!("--method pplt needs --pair (or --base)");
            }
            corpus.clone()
        }
        (Method::Pplt, None, _) => usage!("--method pplt needs --corpus"),
        (_, _, Some(records)) => records.clone(),
        (_, _, None) => usage!("--method qet and --method jdm need --records"),
    };
    let base = a.base.as_deref().map(PolicyThresholds::load).transpose()?;
    let scorer = scorer_spec(&a.scorer, ScoreKind::ReferenceBased)?;

    let (pair, value, sample_count, sha) = match a.method {
        Method::Pplt => {
            let corpus = read_corpus(&input)?;
            let lm = load_lm(a.lm.as_ref().expect("checked"))?;
            let pair = a.pair.clone().or(base.as_ref().map(|b| b.pair.clone())).expect("checked");
            let t = calibrate_pplt(&lm, &corpus, a.fraction)?;
            (pair, vec![("pplt", t)], corpus.len(), file_sha256(&input)?)
        }
        Method::Qet | Method::Jdm => {
            let data = load_records_from(&input, a.lenient)?;
            let mut records = data.records;
            let pair = match &a.pair {
                Some(p) => p.clone(),
                None => common_pair(&records)?,
            };
            let values = if a.method == Method::Qet {
                fill_qe(&mut records, &scorer)?;
                vec![("qet", calibrate_qet(&records, a.fraction)?)]
            } else {
                fill_quality(&mut records, &scorer)?;
                let set = select_jdm_samples(&records, &selection(&a.jdm))?;
                vec![("jdm_t1", set.t1), ("jdm_t2", set.t2)]
            };
            (pair, values, records.len(), data.sha256)
        }
    };

    let mut thresholds = match base {
        Some(b) if b.pair != pair => usage!("--base thresholds are for {} but calibration is for {pair}", b.pair),
        Some(mut b) => {
            b.target_llm_fraction = a.fraction;
            b
        }
        None => PolicyThresholds::new(pair, a.fraction),
    };
    for (name, v) in &value {
        match *name {
            "pplt" => thresholds.pplt_threshold = Some(*v),
            "qet" => thresholds.qet_threshold = Some(*v),
            "jdm_t1" => thresholds.jdm_t1 = Some(*v),
            _ => thresholds.jdm_t2 = Some(*v),
        }
    }
    thresholds.provenance = Some(Provenance {
        dataset: input.display().to_string(),
        dataset_sha256: Some(sha),
        sample_count,
        calibrated_at: Some(calibrated_at(&input)?),
    });
    thresholds.save(&a.out)?;
    for (name, v) in value {
        println!("{name} = {v}");
    }
    println!("wrote {}", a.out.display());
    Ok(())
}

fn select_jdm(a: SelectJdmArgs) -> Result<()> {
    let scorer = scorer_spec(&a.scorer, ScoreKind::ReferenceBased)?;
    let sel = selection(&a.jdm);
    let data = load_records(&a.dataset)?;
    let mut records = data.records;
    fill_quality(&mut records, &scorer)?;
    let set = select_jdm_samples(&records, &sel)?;
    let mut manifest = set.manifest();
    manifest.selection = Some(sel);
    manifest.dataset_sha256 = Some(data.sha256);
    set.save(&a.out_dir, &manifest)?;
    if set.llm_never_better {
        tracing::warn!("no positive sample shows an LLM gain (t2 <= 0)");
    }
    println!(
        "t1 = {}, t2 = {}; {} positives, {} negatives -> {}",
        set.t1,
        set.t2,
        set.positives.len(),
        set.negatives.len(),
        a.out_dir.display()
    );
    Ok(())
}

fn train_jdm(a: TrainJdmArgs) -> Result<()> {
    if !(a.learning_rate > 0.0 && a.l2 >= 0.0) {
        usage!("--learning-rate must be positive and --l2 non-negative");
    }
    let set = JdmTrainingSet::load(&a.samples)?;
    let lm = load_lm(&a.lm)?;
    let opts = TrainOptions {
        epochs: a.epochs,
        learning_rate: a.learning_rate,
        l2: a.l2,
        seed: a.seed,
    };
    let clf = train_linear_decider(&set, &lm, &opts)?;
    clf.save(&a.out)?;
    let loss = clf.training.as_ref().map_or(f64::NAN, |t| t.final_loss);
    println!(
        "trained on {} positives and {} negatives; final loss {loss:.6} -> {}",
        set.positives.len(),
        set.negatives.len(),
        a.out.display()
    );
    Ok(())
}

fn replay(a: ReplayArgs) -> Result<()> {
    let scorer = scorer_spec(&a.scorer, a.mode)?;
    let data = load_records(&a.dataset)?;
    let pair = common_pair(&data.records)?;
    let spec = decider_spec(&a.decider, &pair, None)?;
    let decider = Decider::load(&spec)?;
    let prep = prepare(
        &data.records,
        &Scorer::new(scorer)?,
        a.group_by.as_deref(),
        decider.policy() == Policy::Qet,
    )?;
    let out = replay_prepared(&prep, &decider)?;
    if let Some(path) = &a.decisions {
        let mut text = String::new();
        for d in &out.decisions {
            text.push_str(&serde_json::to_string(&json!({
                "id": d.id,
                "backend": d.backend,
                "evidence": d.evidence,
            }))?);
            text.push('\n');
        }
        write_atomic(path, text.as_bytes())?;
    }
    let r = &out.report;
    match &a.out {
        Some(path) => {
            write_json(path, r)?;
            println!(
                "{}: n = {}, mean quality {:.4} ({}), llm_p {:.4} -> {}",
                r.policy,
                r.n,
                r.mean_quality,
                r.score_kind,
                r.llm_p,
                path.display()
            );
        }
        None => println!("{}", serde_json::to_string_pretty(r)?),
    }
    Ok(())
}

fn sweep(a: SweepArgs) -> Result<()> {
    if a.values.len() < 2 {
        usage!("--values needs at least two points");
    }
    if let Some(v) = a.values.iter().find(|v| v.is_nan()) {
        usage!("--values contains {v}");
    }
    let scorer = scorer_spec(&a.scorer, a.mode)?;
    let data = load_records(&a.dataset)?;
    let pair = common_pair(&data.records)?;
    let spec = decider_spec(&a.decider, &pair, Some(a.values[0]))?;
    if !matches!(spec.policy, Policy::Qet | Policy::Pplt | Policy::Jdm) {
        usage!("sweep needs policy qet, pplt or jdm, not {}", spec.policy);
    }
    let decider = Decider::load(&spec)?;
    let prep = prepare(&data.records, &Scorer::new(scorer)?, None, spec.policy == Policy::Qet)?;
    let points = pareto_sweep(&prep, &decider, &a.values)?;
    emit(a.out.as_deref(), &sweep_to_csv(&points))
}

fn serve(a: ServeArgs) -> Result<()> {
    let mut config = RouterConfig::load(&a.config).with_context(|| format!("reading {}", a.config.display()))?;
    if let Some(addr) = a.listen {
        config.listen_address = addr;
    }
    for (spec, url, kind) in [
        (&mut config.nmt, a.nmt_url, BackendKind::Nmt),
        (&mut config.llm, a.llm_url, BackendKind::Llm),
    ] {
        if let Some(url) = url {
            spec.kind = kind;
            spec.endpoint = Some(url);
            spec.simulated = None;
        }
    }
    if let Some(url) = a.scorer_url {
        config.qe_scorer = Some(match config.qe_scorer.take() {
            Some(mut s) => {
                s.backend = mtcascade::scoring::ScorerBackend::Remote;
                s.endpoint = Some(url);
                s
            }
            None => ScorerSpec::remote(ScoreKind::ReferenceFree, url),
        });
    }
    config.validate()?;
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .context("starting runtime")?;
    runtime.block_on(mtcascade::router::serve(&config))?;
    Ok(())
}

fn report(a: ReportArgs) -> Result<()> {
    let reports: Vec<ReplayReport> = a
        .reports
        .iter()
        .map(|p| read_json(p).with_context(|| format!("reading {}", p.display())))
        .collect::<Result<_>>()?;
    let cmp = compare_report(&reports)?;
    if let Some(path) = &a.out_csv {
        write_atomic(path, cmp.csv.as_bytes())?;
    }
    let mut text = cmp.text;
    if a.difficulty {
        for r in reports.iter().filter(|r| !r.groups.is_empty()) {
            text.push_str(&format!("\n{} by {}:\n", r.policy, r.group_by.as_deref().unwrap_or("group")));
            text.push_str(&difficulty_table(r)?);
        }
    }
    emit(a.out_text.as_deref(), &text)
}
