//! Bodies of the eight pipeline stages.

use super::artifacts::{file_digest, read_json, read_jsonl, stage_dir, StageWriter};
use super::config::RunnerSpec;
use super::{Pipeline, PipelineError, Stage};
use crate::corpus::{
    export_native, load_dataset, load_dataset_with, split_train_dev, validate_corpus, CandidateSolution, Corpus,
    DatasetFormat, LoadOptions, ProblemSpec,
};
use crate::estimators::{score_els, score_fs, score_tls, score_zs, EstimatorError, Method, QualityScore, Scored};
use crate::evaluation::{evaluate_cell, global_ndcg, sweep_k, tune_k, EvalError, EvalReport, LabelMap, TuningRow};
use crate::executor::{label_corpus, pass_rate, CorrectnessLabel, ProcessRunner, RunnerRegistry, StubRunner, Verdict};
use crate::gateway::{subject_key, BackendConfig, Gateway, GatewayError, OracleTransport, Role};
use crate::retrieval::{build_index, load_index, save_index, LabeledExample, NeighborhoodConfig, RetrievalError};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap, HashSet};
use std::sync::Arc;

/// One line of the predict stage's score file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub test_set: String,
    #[serde(flatten)]
    pub score: QualityScore,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct PromptRecord {
    test_set: String,
    problem_id: String,
    solution_id: String,
    method: Method,
    k: Option<usize>,
    prompt: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SetSummary {
    pub solutions: usize,
    pub pass: usize,
    pub fail: usize,
    pub timeout: usize,
    pub infra_error: usize,
    /// Over pass/fail/timeout labels only.
    pub pass_rate: Option<f64>,
}

fn gateway_err(e: GatewayError) -> PipelineError {
    match e {
        GatewayError::Config(msg) => PipelineError::Config(msg),
        other => PipelineError::Backend(other.to_string()),
    }
}

fn retrieval_err(e: RetrievalError) -> PipelineError {
    match e {
        RetrievalError::Encoder(g) => gateway_err(g),
        other => PipelineError::Other(other.to_string()),
    }
}

fn estimator_err(e: EstimatorError) -> PipelineError {
    match e {
        EstimatorError::Gateway(g) => gateway_err(g),
        EstimatorError::Retrieval(r) => retrieval_err(r),
        other => PipelineError::Other(other.to_string()),
    }
}

fn need(g: &Option<Gateway>) -> &Gateway {
    g.as_ref().expect("backend presence checked at config validation")
}

fn pool(threads: usize) -> Result<rayon::ThreadPool, PipelineError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| PipelineError::Other(e.to_string()))
}

fn check_corpus(name: &str, corpus: &Corpus) -> Result<(), PipelineError> {
    if corpus.is_empty() {
        return Err(PipelineError::Config(format!("dataset `{name}` has no problems")));
    }
    let report = validate_corpus(&corpus.problems, &corpus.suites, &corpus.solutions);
    match report.issues.first() {
        None => Ok(()),
        Some(first) => Err(PipelineError::Config(format!(
            "dataset `{name}`: {} validation issue(s), first: {first}",
            report.issues.len()
        ))),
    }
}

impl Pipeline {
    /// Artifact set names: the two halves of the training dataset, then the test sets.
    pub(super) fn set_names(&self) -> Vec<String> {
        ["train".to_string(), "dev".to_string()]
            .into_iter()
            .chain(self.test_names())
            .collect()
    }

    fn test_names(&self) -> Vec<String> {
        self.cfg.test_sets.iter().map(|d| d.name.clone()).collect()
    }

    pub(super) fn ingest_inputs(&self) -> Result<BTreeMap<String, String>, PipelineError> {
        self.cfg
            .datasets()
            .map(|d| Ok((format!("dataset/{}", d.name), file_digest(&d.path)?)))
            .collect()
    }

    fn load_set(&self, set: &str) -> Result<Corpus, PipelineError> {
        let path = stage_dir(&self.out, Stage::Ingest).join("corpus").join(format!("{set}.jsonl"));
        Ok(load_dataset(&path, DatasetFormat::Native)?)
    }

    fn solutions(&self, set: &str) -> Result<Vec<CandidateSolution>, PipelineError> {
        read_jsonl(&stage_dir(&self.out, Stage::Generate).join("solutions").join(format!("{set}.jsonl")))
    }

    fn labels(&self, set: &str) -> Result<Vec<CorrectnessLabel>, PipelineError> {
        read_jsonl(&stage_dir(&self.out, Stage::Label).join("labels").join(format!("{set}.jsonl")))
    }

    fn label_map(&self, set: &str) -> Result<LabelMap, PipelineError> {
        Ok(self
            .labels(set)?
            .into_iter()
            .filter_map(|l| l.correctness().map(|c| ((l.problem_id, l.solution_id), c)))
            .collect())
    }

    fn scores(&self) -> Result<Vec<ScoreRecord>, PipelineError> {
        read_jsonl(&stage_dir(&self.out, Stage::Predict).join("scores.jsonl"))
    }

    fn backend_config(&self, role: Role) -> Result<BackendConfig, PipelineError> {
        let slot = match role {
            Role::Generator => Some(&self.cfg.backends.generator),
            Role::Predictor => self.cfg.backends.predictor.as_ref(),
            Role::Encoder => self.cfg.backends.encoder.as_ref(),
        };
        let mut cfg = slot
            .cloned()
            .ok_or_else(|| PipelineError::Config(format!("backends.{role}: not configured")))?;
        if cfg.cache_dir.is_none() && !cfg.is_stub() {
            cfg.cache_dir = Some(self.out.join("cache").join(role.to_string()));
        }
        Ok(cfg)
    }

    fn gateway(&self, role: Role) -> Result<Gateway, PipelineError> {
        let cfg = self.backend_config(role)?;
        if let Some(t) = self.transports.get(&role) {
            return Gateway::with_transport(cfg, t.clone()).map_err(gateway_err);
        }
        if cfg.endpoint == "oracle-stub" {
            let mut truth = HashMap::new();
            for set in self.set_names() {
                for l in self.labels(&set)? {
                    if let Some(c) = l.correctness() {
                        truth.insert(subject_key(&l.problem_id, &l.solution_id), c);
                    }
                }
            }
            return Gateway::with_transport(cfg, Arc::new(OracleTransport::new(truth))).map_err(gateway_err);
        }
        Gateway::from_config(cfg).map_err(gateway_err)
    }

    fn registry(&self) -> Result<RunnerRegistry, PipelineError> {
        let mut registry = RunnerRegistry::new();
        for (lang, spec) in &self.cfg.runners {
            match spec {
                RunnerSpec::Builtin(_) => registry.register(lang.clone(), Arc::new(StubRunner::new())),
                RunnerSpec::Command(cmd) => {
                    let runner = ProcessRunner::from_command(cmd)
                        .ok_or_else(|| PipelineError::Config(format!("runners.{lang}: empty command")))?;
                    registry.register(lang.clone(), Arc::new(runner));
                }
            }
        }
        Ok(registry)
    }

    pub(super) fn ingest(&self, w: &mut StageWriter) -> Result<(), PipelineError> {
        let load = |d: &super::DatasetConfig| -> Result<Corpus, PipelineError> {
            let opts = LoadOptions { language: d.language.clone() };
            let corpus = load_dataset_with(&d.path, d.format, &opts)?;
            check_corpus(&d.name, &corpus)?;
            Ok(corpus)
        };
        let train = load(&self.cfg.train)?;
        let split = split_train_dev(&train.problems, self.cfg.split.dev_fraction, self.cfg.split_seed())?;
        log::info!("ingest: {} train / {} dev problems", split.train.len(), split.dev.len());
        w.write("corpus/train.jsonl", export_native(&train.restrict(&split.train)))?;
        w.write("corpus/dev.jsonl", export_native(&train.restrict(&split.dev)))?;
        let train_ids: HashSet<&str> = train.problems.iter().map(|p| p.id.as_str()).collect();
        for d in &self.cfg.test_sets {
            let corpus = load(d)?;
            let overlap = corpus.problems.iter().filter(|p| train_ids.contains(p.id.as_str())).count();
            if overlap > 0 {
                log::warn!("test set `{}` shares {overlap} problem id(s) with the training dataset", d.name);
            }
            w.write(&format!("corpus/{}.jsonl", d.name), export_native(&corpus))?;
        }
        w.write_json("split.json", &split)
    }

    pub(super) fn generate(&self, w: &mut StageWriter) -> Result<(), PipelineError> {
        use rayon::prelude::*;

        let gen = self.gateway(Role::Generator)?;
        let threads = pool(gen.config().max_parallel)?;
        for set in self.set_names() {
            let corpus = self.load_set(&set)?;
            let per_problem = threads.install(|| {
                corpus
                    .problems
                    .par_iter()
                    .map(|p| gen.generate_solutions(p, &self.cfg.generation))
                    .collect::<Result<Vec<_>, _>>()
            });
            let solutions: Vec<CandidateSolution> = per_problem.map_err(gateway_err)?.concat();
            log::info!("generate: {set}: {} solutions", solutions.len());
            w.write_jsonl(&format!("solutions/{set}.jsonl"), &solutions)?;
        }
        Ok(())
    }

    pub(super) fn label(&self, w: &mut StageWriter) -> Result<(), PipelineError> {
        let registry = self.registry()?;
        let mut summary = BTreeMap::new();
        for set in self.set_names() {
            let corpus = self.load_set(&set)?;
            let solutions = self.solutions(&set)?;
            let labels = label_corpus(&corpus.problems, &corpus.suites, &solutions, &self.cfg.sandbox, &registry)
                .map_err(|e| PipelineError::Other(e.to_string()))?;
            let count = |v: Verdict| labels.iter().filter(|l| l.verdict == v).count();
            let s = SetSummary {
                solutions: labels.len(),
                pass: count(Verdict::Pass),
                fail: count(Verdict::Fail),
                timeout: count(Verdict::Timeout),
                infra_error: count(Verdict::InfraError),
                pass_rate: pass_rate(&labels).ok(),
            };
            log::info!("label: {set}: {}/{} pass, {} infra errors", s.pass, s.solutions, s.infra_error);
            w.write_jsonl(&format!("labels/{set}.jsonl"), &labels)?;
            summary.insert(set, s);
        }
        w.write_json("summary.json", &summary)
    }

    pub(super) fn index(&self, w: &mut StageWriter) -> Result<(), PipelineError> {
        if self.cfg.fs_methods().is_empty() {
            return w.write_json("skipped.json", &serde_json::json!({ "reason": "no few-shot method configured" }));
        }
        let corpus = self.load_set("train")?;
        let solutions = self.solutions("train")?;
        let verdicts: HashMap<(String, String), Verdict> =
            self.labels("train")?.into_iter().map(|l| ((l.problem_id, l.solution_id), l.verdict)).collect();
        let examples = solutions
            .iter()
            .map(|s| {
                let problem = corpus
                    .problem(&s.problem_id)
                    .ok_or_else(|| PipelineError::Artifact(format!("solution for unknown problem `{}`", s.problem_id)))?;
                let verdict = *verdicts
                    .get(&s.key())
                    .ok_or_else(|| PipelineError::Artifact(format!("no label for {}/{}", s.problem_id, s.solution_id)))?;
                Ok(LabeledExample {
                    problem_id: s.problem_id.clone(),
                    solution_id: s.solution_id.clone(),
                    problem_text: problem.text().to_string(),
                    solution_text: s.code.clone(),
                    verdict,
                })
            })
            .collect::<Result<Vec<_>, PipelineError>>()?;
        let encoder = self.gateway(Role::Encoder)?;
        let index = build_index(&examples, &encoder).map_err(retrieval_err)?;
        log::info!("index: {} correct / {} incorrect examples", index.correct_store.len(), index.incorrect_store.len());
        save_index(&index, &w.dir().join("store")).map_err(retrieval_err)?;
        for rel in ["store/manifest.json", "store/correct.jsonl", "store/incorrect.jsonl"] {
            w.record(rel)?;
        }
        Ok(())
    }

    pub(super) fn predict(&self, w: &mut StageWriter) -> Result<(), PipelineError> {
        use rayon::prelude::*;

        struct Task<'a> {
            set: &'a str,
            method: Method,
            k: Option<usize>,
            problem: &'a ProblemSpec,
            solution: &'a CandidateSolution,
            siblings: Vec<&'a CandidateSolution>,
        }

        let methods = &self.cfg.methods;
        let index = if self.cfg.fs_methods().is_empty() {
            None
        } else {
            Some(load_index(&stage_dir(&self.out, Stage::Index).join("store")).map_err(retrieval_err)?)
        };
        let encoder = methods.iter().any(|m| *m != Method::Zs).then(|| self.gateway(Role::Encoder)).transpose()?;
        let predictor = methods.iter().any(|m| m.uses_predictor()).then(|| self.gateway(Role::Predictor)).transpose()?;

        let mut sets: Vec<(String, Corpus, Vec<CandidateSolution>, LabelMap)> = Vec::new();
        for set in std::iter::once("dev".to_string()).chain(self.test_names()) {
            let corpus = self.load_set(&set)?;
            let solutions = self.solutions(&set)?;
            let labels = self.label_map(&set)?;
            sets.push((set, corpus, solutions, labels));
        }

        let grid = self.cfg.k_grid();
        let mut tasks = Vec::new();
        for (set, corpus, solutions, labels) in &sets {
            let mut by_problem: HashMap<&str, Vec<&CandidateSolution>> = HashMap::new();
            for s in solutions {
                by_problem.entry(s.problem_id.as_str()).or_default().push(s);
            }
            for &method in methods {
                let ks: Vec<Option<usize>> = if method.is_few_shot() { grid.iter().copied().map(Some).collect() } else { vec![None] };
                if set == "dev" && !method.is_few_shot() {
                    continue;
                }
                for &k in &ks {
                    // pairs without a usable label cannot be evaluated
                    for s in solutions.iter().filter(|s| labels.contains_key(&s.key())) {
                        let problem = corpus
                            .problem(&s.problem_id)
                            .ok_or_else(|| PipelineError::Artifact(format!("solution for unknown problem `{}`", s.problem_id)))?;
                        let siblings = by_problem[s.problem_id.as_str()]
                            .iter()
                            .copied()
                            .filter(|o| o.solution_id != s.solution_id)
                            .collect();
                        tasks.push(Task { set, method, k, problem, solution: s, siblings });
                    }
                }
            }
        }

        let width = [&predictor, &encoder].iter().filter_map(|g| g.as_ref()).map(|g| g.config().max_parallel).max();
        let template = &self.cfg.prompt;
        let run = |t: &Task<'_>| -> Result<Scored, EstimatorError> {
            match t.method {
                Method::Zs => score_zs(t.problem, t.solution, template, need(&predictor)),
                Method::Els => score_els(t.problem, t.solution, &t.siblings, need(&encoder)),
                Method::Tls => score_tls(t.problem, t.solution, &t.siblings, need(&encoder)),
                m => {
                    let cfg = NeighborhoodConfig::new(t.k.expect("few-shot tasks carry k"), m.alpha().expect("few-shot alpha"))?;
                    let index = index.as_ref().expect("index loaded for few-shot methods");
                    score_fs(t.problem, t.solution, index, &cfg, template, need(&encoder), need(&predictor))
                }
            }
        };
        log::info!("predict: {} scoring tasks", tasks.len());
        let results = pool(width.unwrap_or(1))?.install(|| tasks.par_iter().map(run).collect::<Result<Vec<_>, _>>());
        let results = results.map_err(estimator_err)?;

        let mut scores = Vec::with_capacity(results.len());
        let mut prompts = Vec::new();
        for (task, scored) in tasks.iter().zip(results) {
            if let Some(prompt) = scored.prompt {
                prompts.push(PromptRecord {
                    test_set: task.set.to_string(),
                    problem_id: task.solution.problem_id.clone(),
                    solution_id: task.solution.solution_id.clone(),
                    method: task.method,
                    k: task.k,
                    prompt,
                });
            }
            scores.push(ScoreRecord { test_set: task.set.to_string(), score: scored.score });
        }
        w.write_jsonl("scores.jsonl", &scores)?;
        if self.cfg.audit_prompts {
            w.write_jsonl("prompts.jsonl", &prompts)?;
        }
        Ok(())
    }

    fn select(scores: &[ScoreRecord], set: &str, method: Method, k: Option<usize>) -> Vec<QualityScore> {
        scores
            .iter()
            .filter(|r| r.test_set == set && r.score.method == method && r.score.k_used == k)
            .map(|r| r.score.clone())
            .collect()
    }

    pub(super) fn tune(&self, w: &mut StageWriter) -> Result<(), PipelineError> {
        let scores = self.scores()?;
        let labels = self.label_map("dev")?;
        let mut rows = Vec::new();
        for method in self.cfg.fs_methods() {
            let mut table = BTreeMap::new();
            for k in self.cfg.k_grid() {
                let value = match global_ndcg(&Self::select(&scores, "dev", method, Some(k)), &labels) {
                    Ok(v) => Some(v),
                    Err(EvalError::Degenerate { .. }) => None,
                    Err(e) => return Err(e.into()),
                };
                table.insert(k, value);
            }
            if table.values().all(Option::is_none) {
                log::warn!("tune: dev G-nDCG undefined for {method} (single-class dev labels); using the smallest k");
            }
            let chosen = tune_k(&table)?;
            log::info!("tune: {method}: k = {chosen}");
            rows.extend(table.into_iter().map(|(k, dev_gndcg)| TuningRow { method, k, dev_gndcg, chosen: k == chosen }));
        }
        w.write_json("tuning.json", &rows)
    }

    fn metadata(&self, chosen: &BTreeMap<Method, usize>) -> BTreeMap<String, String> {
        let mut meta = BTreeMap::new();
        meta.insert("config_hash".into(), self.config_hash.clone());
        meta.insert("seed".into(), self.cfg.seed.to_string());
        meta.insert("split_seed".into(), self.cfg.split_seed().to_string());
        meta.insert("dev_fraction".into(), self.cfg.split.dev_fraction.to_string());
        meta.insert("k_grid".into(), format!("{:?}", self.cfg.k_grid()));
        meta.insert("k_unit".into(), "examples per class".into());
        meta.insert("baseline_aggregation".into(), "ELS/TLS: arithmetic mean over sibling solutions".into());
        meta.insert("local_ndcg_degenerate".into(), "single-class problems excluded and counted".into());
        let backends = [
            ("generator", Some(&self.cfg.backends.generator)),
            ("predictor", self.cfg.backends.predictor.as_ref()),
            ("encoder", self.cfg.backends.encoder.as_ref()),
        ];
        for (slot, b) in backends {
            if let Some(b) = b {
                meta.insert(format!("backend.{slot}"), format!("{} {}", b.endpoint, b.model_name));
            }
        }
        for (m, k) in chosen {
            meta.insert(format!("k.{m}"), k.to_string());
            meta.insert(format!("alpha.{m}"), m.alpha().map(|a| a.to_string()).unwrap_or_default());
        }
        meta
    }

    pub(super) fn evaluate(&self, w: &mut StageWriter) -> Result<(), PipelineError> {
        let scores = self.scores()?;
        let tuning: Vec<TuningRow> = read_json(&stage_dir(&self.out, Stage::Tune).join("tuning.json"))?;
        let chosen: BTreeMap<Method, usize> = tuning.iter().filter(|r| r.chosen).map(|r| (r.method, r.k)).collect();
        let mut rows = Vec::new();
        let mut sweep_groups = BTreeMap::new();
        let mut labels_by_set = BTreeMap::new();
        for set in self.test_names() {
            let labels = self.label_map(&set)?;
            for &method in &self.cfg.methods {
                let k = if method.is_few_shot() {
                    Some(*chosen.get(&method).ok_or_else(|| PipelineError::Artifact(format!("no tuned k for {method}")))?)
                } else {
                    None
                };
                rows.extend(evaluate_cell(method, &set, k, &Self::select(&scores, &set, method, k), &labels)?);
                if method.is_few_shot() {
                    for k in self.cfg.k_grid() {
                        sweep_groups.insert((method, set.clone(), k), Self::select(&scores, &set, method, Some(k)));
                    }
                }
            }
            labels_by_set.insert(set, labels);
        }
        let sweep = EvalReport { rows: sweep_k(&sweep_groups, &labels_by_set)?, ..Default::default() };
        let report = EvalReport { rows, tuning, metadata: self.metadata(&chosen) };
        w.write("report.csv", report.to_csv())?;
        w.write("report.jsonl", report.to_jsonl())?;
        w.write_json("report.json", &report)?;
        w.write("sweep.csv", sweep.to_csv())
    }

    pub(super) fn report(&self, w: &mut StageWriter) -> Result<(), PipelineError> {
        let report: EvalReport = read_json(&stage_dir(&self.out, Stage::Evaluate).join("report.json"))?;
        let sets = self.test_names();
        let mut table = String::from("method,k");
        for set in &sets {
            table.push_str(&format!(",{set} G-nDCG,{set} L-nDCG"));
        }
        table.push('\n');
        for &method in &self.cfg.methods {
            let k = report.rows.iter().find(|r| r.method == method).and_then(|r| r.k);
            table.push_str(&format!("{method},{}", k.map(|k| k.to_string()).unwrap_or_default()));
            for set in &sets {
                for scope in [crate::evaluation::Scope::Global, crate::evaluation::Scope::Local] {
                    let value = report
                        .rows
                        .iter()
                        .find(|r| r.method == method && &r.test_set == set && r.scope == scope)
                        .and_then(|r| r.value);
                    table.push_str(&format!(",{}", value.map(|v| format!("{v:.4}")).unwrap_or_default()));
                }
            }
            table.push('\n');
        }
        w.write("table.csv", table)?;
        let chain = self.check_provenance_chain()?;
        w.write_json("provenance.json", &serde_json::json!({ "config_hash": self.config_hash, "stages": chain }))
    }
}
