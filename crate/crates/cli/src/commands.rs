//! The pipeline commands. Each reads its upstream artifacts, checks their
//! hashes, writes its outputs and a manifest.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use neuroprobe::aqua::{expand, read_examples, read_proxy_sets, write_examples, write_proxy_sets, ProxySet, Prompter};
use neuroprobe::attribution::{attribute, AttributionSettings, NeuronSetFile, ScorerKind, NEURON_SET_SCHEMA};
use neuroprobe::engine::{self, Params};
use neuroprobe::evaluation::{
    balanced_selection, collateral_report, common_neurons, comprehends, comprehension, cross_task, evaluate_sets, layer_histogram,
    proxy_tally, sweep_report, write_histogram_csv, write_matrix_csv, write_summary_csv, write_sweep_csv, CollateralReport,
    CommonNeurons, CrossTaskMatrix, LayerHistogram, SummaryRow, SweepReport,
};
use neuroprobe::intervention::{ratio_sweep_with_step, Direction, PlanFile, PLAN_SCHEMA};
use neuroprobe::tasks::{
    build_planted, build_tokenizer, generate_task, train, QuestionSampler, TaskFamily, TaskSpec, TrainCurve,
};
use neuroprobe::{Model, ModelConfig, OverrideMap, PromptTemplate, QAExample, Scalar, Tokenizer};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::artifacts::{file_hash, read_text, write, write_json, CliError, CliResult, Layout, Manifest};
use crate::config::{ModelSource, RunConfig};

fn direction_name(d: Direction) -> &'static str {
    match d {
        Direction::Enhance => "enhance",
        Direction::Degrade => "degrade",
    }
}

fn scorer_name(s: ScorerKind) -> String {
    serde_json::to_value(s).expect("serializes").as_str().expect("string").to_string()
}

fn task_seed(seed: u64, task: TaskFamily) -> u64 {
    neuroprobe::aqua::derive_seed(seed, task.name())
}

/// The configured template and the hash of its text.
pub fn template(cfg: &RunConfig) -> CliResult<(PromptTemplate, String)> {
    let t = match cfg.template.as_str() {
        "default" => PromptTemplate::default(),
        "compact" => PromptTemplate::compact(),
        path => PromptTemplate::from_toml(&read_text(Path::new(path))?)?,
    };
    let hash = crate::artifacts::sha256_bytes(t.to_toml().as_bytes());
    Ok((t, hash))
}

fn load_tokenizer(cfg: &RunConfig, m: &mut Manifest) -> CliResult<Tokenizer> {
    let path = cfg.paths.vocab_file();
    m.input(cfg, &path)?;
    Ok(Tokenizer::load(&path)?)
}

fn load_model<T: Scalar>(cfg: &RunConfig, m: &mut Manifest) -> CliResult<(Model<T>, String)> {
    let path = cfg.paths.weights_file();
    m.input(cfg, &path)?;
    let model = Model::<T>::load(&path)?;
    Ok((model, engine::file_hash(&path)?))
}

fn load_examples(cfg: &RunConfig, m: &mut Manifest, path: &Path) -> CliResult<Vec<QAExample>> {
    m.input(cfg, path)?;
    Ok(read_examples(path)?)
}

fn load_proxies(cfg: &RunConfig, m: &mut Manifest, path: &Path) -> CliResult<Vec<ProxySet>> {
    m.input(cfg, path)?;
    Ok(read_proxy_sets(path)?)
}

fn provenance(cfg: &RunConfig, extra: &[(&str, &str)]) -> BTreeMap<String, String> {
    let mut p = BTreeMap::new();
    p.insert("config".to_string(), cfg.content_hash());
    for (k, v) in extra {
        p.insert(k.to_string(), v.to_string());
    }
    p
}

pub fn cmd_gen(cfg: &RunConfig) -> CliResult<()> {
    let layout = Layout(cfg);
    let mut m = Manifest::new("gen", cfg);
    let (tpl, _) = template(cfg)?;
    let mut all = Vec::new();
    for &task in &cfg.tasks {
        let spec = TaskSpec {
            family: task,
            vocab: cfg.data.vocab.clone(),
            n_train: cfg.data.n_train,
            n_eval: cfg.data.n_eval,
            seed: task_seed(cfg.seed, task),
        };
        let data = generate_task(&spec)?;
        let name = task.name();
        crate::artifacts::ensure_dir(&layout.task_dir(name))?;
        write_examples(&layout.train_file(name), &data.train)?;
        write_examples(&layout.eval_file(name), &data.eval)?;
        write_proxy_sets(&layout.eval_proxies_file(name), &expand(&data.eval, cfg.seed)?)?;
        for p in [layout.train_file(name), layout.eval_file(name), layout.eval_proxies_file(name)] {
            m.output(cfg, &p)?;
        }
        all.extend(data.train);
        all.extend(data.eval);
    }
    let tok = build_tokenizer(&tpl, &all)?;
    let vocab = cfg.paths.vocab_file();
    write(&vocab, tok.to_text().as_bytes())?;
    m.output(cfg, &vocab)?;
    m.save(cfg)?;
    log::info!("generated {} tasks, vocabulary of {}", cfg.tasks.len(), tok.vocab_size());
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
pub struct GateReport {
    pub model_hash: String,
    pub gate: f64,
    pub comprehension: BTreeMap<String, f64>,
    pub passed: bool,
}

fn gate_report<T: Scalar>(cfg: &RunConfig, m: &mut Manifest, model: &Model<T>, hash: &str, prompter: Prompter<'_>) -> CliResult<GateReport> {
    let layout = Layout(cfg);
    let mut com = BTreeMap::new();
    for &task in &cfg.tasks {
        let sets = load_proxies(cfg, m, &layout.eval_proxies_file(task.name()))?;
        let records = evaluate_sets(model, prompter, &sets, &OverrideMap::new())?;
        com.insert(task.name().to_string(), comprehension(&records));
    }
    let passed = com.values().any(|&c| c >= cfg.gate);
    Ok(GateReport { model_hash: hash.into(), gate: cfg.gate, comprehension: com, passed })
}

pub fn cmd_train<T: Scalar>(cfg: &RunConfig) -> CliResult<()> {
    let layout = Layout(cfg);
    let mut m = Manifest::new("train", cfg);
    let (tpl, _) = template(cfg)?;
    let tok = load_tokenizer(cfg, &mut m)?;
    let prompter = Prompter::new(&tpl, &tok);
    let mut examples = Vec::new();
    for &task in &cfg.tasks {
        examples.extend(load_examples(cfg, &mut m, &layout.train_file(task.name()))?);
    }
    if examples.is_empty() {
        return Err(CliError::usage("no training data"));
    }
    let longest = examples.iter().map(|e| prompter.tokens(e).map(|t| t.len())).collect::<Result<Vec<_>, _>>()?;
    let longest = longest.into_iter().max().unwrap_or(0);
    let s = &cfg.model;
    if longest > s.max_seq {
        return Err(CliError::usage(format!("prompts reach {longest} tokens but model.max_seq is {}", s.max_seq)));
    }
    let mc = ModelConfig::new(s.n_layers, s.d_model, s.n_heads, s.d_ffn, tok.vocab_size(), s.max_seq).with_precision(T::PRECISION);
    mc.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = Model::<T>::new(mc.clone(), Params::random(&mc, cfg.train.init_std, &mut rng))?;
    let sampler = QuestionSampler { prompter, examples: &examples, mask: cfg.train.loss_mask };
    let curve: TrainCurve = train(&mut model, &mut |r| sampler.draw(r), &cfg.train)?;
    let weights = cfg.paths.weights_file();
    crate::artifacts::ensure_dir(weights.parent().unwrap_or(Path::new(".")))?;
    let hash = model.save(&weights)?;
    m.output(cfg, &weights)?;
    let curve_path = layout.report("train_curve.tsv");
    write(&curve_path, curve.to_tsv().as_bytes())?;
    m.output(cfg, &curve_path)?;
    let gate = gate_report(cfg, &mut m, &model, &hash, prompter)?;
    let gate_path = layout.report("train_gate.json");
    write_json(&gate_path, &gate)?;
    m.output(cfg, &gate_path)?;
    m.save(cfg)?;
    log::info!("trained {} steps, final loss {:.4}, gate {:?}", cfg.train.steps, curve.tail_loss(50), gate.comprehension);
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
pub struct PlantedFile {
    pub model_hash: String,
    pub planted_good: Vec<neuroprobe::NeuronId>,
    pub planted_bad: Vec<neuroprobe::NeuronId>,
    pub margin: f64,
    pub check: neuroprobe::tasks::PlantedCheck,
}

pub fn cmd_plant<T: Scalar>(cfg: &RunConfig) -> CliResult<()> {
    let layout = Layout(cfg);
    let mut m = Manifest::new("plant", cfg);
    if !cfg.tasks.contains(&TaskFamily::MarkerDetect) {
        return Err(CliError::usage("the planted model solves marker_detect; add it to tasks"));
    }
    let (tpl, _) = template(cfg)?;
    let tok = load_tokenizer(cfg, &mut m)?;
    let prompter = Prompter::new(&tpl, &tok);
    let eval = load_examples(cfg, &mut m, &layout.eval_file(TaskFamily::MarkerDetect.name()))?;
    let n = cfg.plant_check_questions.min(eval.len());
    let planted = build_planted::<T>(&cfg.planted, prompter, &eval[..n])?;
    let weights = cfg.paths.weights_file();
    let hash = planted.model.save(&weights)?;
    m.output(cfg, &weights)?;
    let info = PlantedFile {
        model_hash: hash,
        planted_good: planted.planted_good,
        planted_bad: planted.planted_bad,
        margin: planted.margin,
        check: planted.check,
    };
    write_json(&layout.planted_file(), &info)?;
    m.output(cfg, &layout.planted_file())?;
    let gate = gate_report(cfg, &mut m, &planted.model, &info.model_hash, prompter)?;
    write_json(&layout.report("train_gate.json"), &gate)?;
    m.output(cfg, &layout.report("train_gate.json"))?;
    m.save(cfg)?;
    log::info!("planted model verified on {n} questions");
    Ok(())
}

/// The first `tr` training questions the model comprehends, topped up
/// with the next ones when too few are comprehended.
fn pick_examples<T: Scalar>(cfg: &RunConfig, model: &Model<T>, prompter: Prompter<'_>, train: &[QAExample]) -> CliResult<Vec<QAExample>> {
    let tr = cfg.attribution.tr;
    let mut yes = Vec::new();
    let mut no = Vec::new();
    for chunk in train.chunks(4 * tr) {
        let sets = expand(chunk, cfg.seed)?;
        let records = evaluate_sets(model, prompter, &sets, &OverrideMap::new())?;
        let tally = proxy_tally(&records);
        for e in chunk {
            let (right, _) = tally[e.id.as_str()];
            if comprehends(right) { yes.push(e.clone()) } else { no.push(e.clone()) }
        }
        if yes.len() >= tr {
            break;
        }
    }
    yes.truncate(tr);
    let short = tr - yes.len();
    yes.extend(no.into_iter().take(short));
    Ok(yes)
}

pub fn cmd_attribute<T: Scalar>(cfg: &RunConfig) -> CliResult<()> {
    let layout = Layout(cfg);
    let mut m = Manifest::new("attribute", cfg);
    let (tpl, tpl_hash) = template(cfg)?;
    let tok = load_tokenizer(cfg, &mut m)?;
    let vocab_hash = file_hash(&cfg.paths.vocab_file())?;
    let prompter = Prompter::new(&tpl, &tok);
    let (model, model_hash) = load_model::<T>(cfg, &mut m)?;
    for &task in &cfg.tasks {
        let name = task.name();
        let eval = load_proxies(cfg, &mut m, &layout.eval_proxies_file(name))?;
        let com = comprehension(&evaluate_sets(&model, prompter, &eval, &OverrideMap::new())?);
        if com < cfg.gate {
            return Err(CliError::numeric(format!(
                "{name}: eval comprehension {com:.3} is below the gate {}; attribution would not be meaningful",
                cfg.gate
            )));
        }
        let train_path = layout.train_file(name);
        let train = load_examples(cfg, &mut m, &train_path)?;
        let train_hash = file_hash(&train_path)?;
        let chosen = pick_examples(cfg, &model, prompter, &train)?;
        for &scorer in &cfg.attribution.scorers {
            let a = &cfg.attribution;
            let settings = AttributionSettings { scorer, augmentation: a.augmentation, m: a.m, z: a.z, k: a.k, seed: cfg.seed };
            let result = attribute(&model, prompter, &chosen, &settings)?;
            let sets = result.sets;
            let file = NeuronSetFile {
                schema_version: NEURON_SET_SCHEMA,
                task: name.into(),
                model_hash: model_hash.clone(),
                scorer,
                augmentation: a.augmentation,
                m: a.m,
                z: sets.z,
                k: sets.k,
                tr: chosen.len(),
                examples: chosen.iter().map(|e| e.id.clone()).collect(),
                ambiguous_count: sets.ambiguous.len(),
                warnings: sets.warnings.clone(),
                good: sets.good,
                bad: sets.bad,
                provenance: provenance(cfg, &[("template", &tpl_hash), ("vocab", &vocab_hash), ("train_data", &train_hash)]),
            };
            let path = layout.sets_file(name, &scorer_name(scorer));
            crate::artifacts::ensure_dir(&cfg.paths.sets_dir())?;
            file.save(&path)?;
            m.output(cfg, &path)?;
            log::info!("{name}/{}: {} good, {} bad", scorer_name(scorer), file.good.len(), file.bad.len());
        }
    }
    m.save(cfg)?;
    Ok(())
}

fn load_sets(cfg: &RunConfig, m: &mut Manifest, path: &Path, model_hash: &str) -> CliResult<(NeuronSetFile, String)> {
    let hash = m.input(cfg, path)?;
    let file = NeuronSetFile::load(path)?;
    if file.model_hash != model_hash {
        return Err(CliError::stale(format!(
            "{} was attributed on model {} but the current weights are {}",
            path.display(),
            file.model_hash,
            model_hash
        )));
    }
    Ok((file, hash))
}

fn current_model_hash(cfg: &RunConfig, m: &mut Manifest) -> CliResult<String> {
    let path = cfg.paths.weights_file();
    m.input(cfg, &path)?;
    Ok(engine::file_hash(&path)?)
}

pub fn cmd_intervene(cfg: &RunConfig) -> CliResult<()> {
    let layout = Layout(cfg);
    let mut m = Manifest::new("intervene", cfg);
    let model_hash = current_model_hash(cfg, &mut m)?;
    for &task in &cfg.tasks {
        for &scorer in &cfg.attribution.scorers {
            let sname = scorer_name(scorer);
            let (file, set_hash) = load_sets(cfg, &mut m, &layout.sets_file(task.name(), &sname), &model_hash)?;
            let sets = file.sets();
            for &dir in &cfg.intervention.directions {
                let plans = ratio_sweep_with_step(&sets, dir, cfg.intervention.budget, cfg.intervention.step)?;
                let pf = PlanFile {
                    schema_version: PLAN_SCHEMA,
                    task: task.name().into(),
                    model_hash: model_hash.clone(),
                    neuron_set_hash: set_hash.clone(),
                    plans,
                    provenance: provenance(cfg, &[]),
                };
                let path = layout.plan_file(task.name(), &sname, direction_name(dir));
                crate::artifacts::ensure_dir(&cfg.paths.plans_dir())?;
                pf.save(&path)?;
                m.output(cfg, &path)?;
            }
        }
    }
    m.save(cfg)?;
    Ok(())
}

/// Everything the evaluation of one plan sweep produced.
#[derive(Debug, Serialize, Deserialize)]
pub struct SweepFile {
    pub task: String,
    pub scorer: ScorerKind,
    pub config: RunConfig,
    pub provenance: BTreeMap<String, String>,
    pub sweep: SweepReport,
    /// Option-probability side effects at the best joint ratio.
    pub collateral: Option<CollateralReport>,
}

fn eval_questions<T: Scalar>(cfg: &RunConfig, model: &Model<T>, prompter: Prompter<'_>, sets: Vec<ProxySet>) -> CliResult<Vec<ProxySet>> {
    if cfg.eval.balanced == 0 {
        return Ok(sets);
    }
    let records = evaluate_sets(model, prompter, &sets, &OverrideMap::new())?;
    let tally = proxy_tally(&records);
    let outcomes: Vec<(String, bool)> = sets.iter().map(|s| (s.parent_id.clone(), comprehends(tally[s.parent_id.as_str()].0))).collect();
    let keep: BTreeSet<String> = balanced_selection(&outcomes, cfg.eval.balanced).into_iter().collect();
    Ok(sets.into_iter().filter(|s| keep.contains(&s.parent_id)).collect())
}

pub fn cmd_eval<T: Scalar>(cfg: &RunConfig) -> CliResult<()> {
    let layout = Layout(cfg);
    let mut m = Manifest::new("eval", cfg);
    let (tpl, _) = template(cfg)?;
    let tok = load_tokenizer(cfg, &mut m)?;
    let prompter = Prompter::new(&tpl, &tok);
    let (model, model_hash) = load_model::<T>(cfg, &mut m)?;
    for &task in &cfg.tasks {
        let name = task.name();
        let questions = load_proxies(cfg, &mut m, &layout.eval_proxies_file(name))?;
        let questions = eval_questions(cfg, &model, prompter, questions)?;
        for &scorer in &cfg.attribution.scorers {
            let sname = scorer_name(scorer);
            let sets_path = layout.sets_file(name, &sname);
            let (_, set_hash) = load_sets(cfg, &mut m, &sets_path, &model_hash)?;
            for &dir in &cfg.intervention.directions {
                let plan_path = layout.plan_file(name, &sname, direction_name(dir));
                let plan_hash = m.input(cfg, &plan_path)?;
                let pf = PlanFile::load(&plan_path)?;
                if pf.model_hash != model_hash {
                    return Err(CliError::stale(format!("{}: planned for model {}, current is {model_hash}", plan_path.display(), pf.model_hash)));
                }
                if pf.neuron_set_hash != set_hash {
                    return Err(CliError::stale(format!("{}: neuron sets changed since planning", plan_path.display())));
                }
                let sweep = sweep_report(&model, prompter, &questions, &pf.plans)?;
                let collateral = match sweep.best_joint {
                    Some(i) => Some(collateral_report(&model, prompter, &pf.plans[i], &questions)?),
                    None => None,
                };
                let out = SweepFile {
                    task: name.into(),
                    scorer,
                    config: cfg.clone(),
                    provenance: provenance(cfg, &[("model", &model_hash), ("neuron_sets", &set_hash), ("plans", &plan_hash)]),
                    sweep,
                    collateral,
                };
                let path = layout.sweep_file(name, &sname, direction_name(dir));
                write_json(&path, &out)?;
                m.output(cfg, &path)?;
                let csv = path.with_extension("csv");
                write_sweep_csv(&csv, &out.sweep)?;
                m.output(cfg, &csv)?;
            }
        }
    }
    m.save(cfg)?;
    Ok(())
}

#[derive(Debug, Serialize)]
pub struct RunReport {
    pub config_hash: String,
    pub config: RunConfig,
    pub model_hash: String,
    pub summary: Vec<SummaryRow>,
    pub layers: BTreeMap<String, LayerHistogram>,
    pub common: Option<CommonNeurons>,
    pub cross_task: Option<CrossTaskMatrix>,
}

pub fn cmd_report<T: Scalar>(cfg: &RunConfig) -> CliResult<()> {
    let layout = Layout(cfg);
    let mut m = Manifest::new("report", cfg);
    let model_hash = current_model_hash(cfg, &mut m)?;
    let mut rows = Vec::new();
    let mut layers = BTreeMap::new();
    let mut first_sets = Vec::new();
    let mut n_layers = 0;
    for &task in &cfg.tasks {
        let name = task.name();
        for (si, &scorer) in cfg.attribution.scorers.iter().enumerate() {
            let sname = scorer_name(scorer);
            let mut sweeps: BTreeMap<&str, SweepReport> = BTreeMap::new();
            for &dir in &cfg.intervention.directions {
                let path = layout.sweep_file(name, &sname, direction_name(dir));
                m.input(cfg, &path)?;
                let f: SweepFile = serde_json::from_str(&read_text(&path)?)
                    .map_err(|e| CliError::stale(format!("{}: {e}", path.display())))?;
                if f.provenance.get("model") != Some(&model_hash) {
                    return Err(CliError::stale(format!("{} was evaluated on a different model", path.display())));
                }
                sweeps.insert(direction_name(dir), f.sweep);
            }
            rows.push(SummaryRow::from_sweeps(name, &sname, sweeps.get("enhance"), sweeps.get("degrade")));
            let (file, _) = load_sets(cfg, &mut m, &layout.sets_file(name, &sname), &model_hash)?;
            let sets = file.sets();
            if n_layers == 0 {
                let (model, _) = load_model::<T>(cfg, &mut Manifest::new("report", cfg))?;
                n_layers = model.config().n_layers;
            }
            let h = layer_histogram(&sets, n_layers)?;
            let hp = layout.report(&format!("{name}.{sname}.layers.csv"));
            write_histogram_csv(&hp, &h)?;
            m.output(cfg, &hp)?;
            layers.insert(format!("{name}.{sname}"), h);
            if si == 0 {
                first_sets.push((name.to_string(), sets));
            }
        }
    }
    let summary = layout.report("summary.csv");
    write_summary_csv(&summary, &rows)?;
    m.output(cfg, &summary)?;
    let (common, matrix) = if cfg.tasks.len() >= 2 {
        let (tpl, _) = template(cfg)?;
        let tok = load_tokenizer(cfg, &mut m)?;
        let prompter = Prompter::new(&tpl, &tok);
        let (model, _) = load_model::<T>(cfg, &mut m)?;
        let eval = cfg
            .tasks
            .iter()
            .map(|t| Ok((t.name().to_string(), load_proxies(cfg, &mut m, &layout.eval_proxies_file(t.name()))?)))
            .collect::<CliResult<Vec<_>>>()?;
        let matrix = cross_task(&model, prompter, &first_sets, &eval, Direction::Degrade, cfg.intervention.budget, cfg.eval.cross_task_ratio)?;
        let mp = layout.report("cross_task.csv");
        write_matrix_csv(&mp, &matrix)?;
        m.output(cfg, &mp)?;
        (Some(common_neurons(&first_sets)), Some(matrix))
    } else {
        (None, None)
    };
    let report = RunReport { config_hash: cfg.content_hash(), config: cfg.clone(), model_hash, summary: rows, layers, common, cross_task: matrix };
    let rp = layout.report("report.json");
    write_json(&rp, &report)?;
    m.output(cfg, &rp)?;
    m.save(cfg)?;
    Ok(())
}

/// The whole pipeline in order.
pub fn cmd_run<T: Scalar>(cfg: &RunConfig) -> CliResult<()> {
    cmd_gen(cfg)?;
    match cfg.model.source {
        ModelSource::Trained => cmd_train::<T>(cfg)?,
        ModelSource::Planted => cmd_plant::<T>(cfg)?,
    }
    cmd_attribute::<T>(cfg)?;
    cmd_intervene(cfg)?;
    cmd_eval::<T>(cfg)?;
    cmd_report::<T>(cfg)
}
