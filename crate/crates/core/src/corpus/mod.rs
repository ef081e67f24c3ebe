//! Dataset model: intent specs, utterance records, condition encoding with
//! masking, and the seen/unseen split protocol.
//!
//! Corpora are immutable after construction and cheap to share; intent specs
//! are interned so identical `(service, intent)` pairs point at one spec.

pub mod vocab;

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
pub use vocab::{TokenId, Vocabulary, BOS, COND_CLOSE, COND_OPEN, EOS, MASK, NUM_SPECIALS, PAD, UNK};

/// A service + intent pair with its natural-language description, the
/// condition every generated utterance is conditioned on.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct IntentSpec {
    pub service: String,
    pub intent: String,
    /// Lowercased, space-joined words of service and intent labels unless an
    /// explicit description was supplied.
    pub description: String,
}

impl IntentSpec {
    /// Build a spec, deriving the description from the joined label words
    /// when none is given.
    pub fn new(service: &str, intent: &str, description: Option<&str>) -> Result<IntentSpec> {
        let description = match description {
            Some(d) if !d.trim().is_empty() => {
                vocab::normalize(d).join(" ")
            }
            _ => {
                let mut words = vocab::normalize(service);
                words.extend(vocab::normalize(intent));
                words.join(" ")
            }
        };
        if description.is_empty() {
            return Err(Error::InvalidConfig(format!(
                "intent {service}/{intent} has an empty description"
            )));
        }
        Ok(IntentSpec { service: service.to_string(), intent: intent.to_string(), description })
    }

    /// `service/intent` label used in reports and file names.
    pub fn label(&self) -> String {
        format!("{}/{}", self.service, self.intent)
    }

    /// Normalized description words.
    pub fn description_words(&self) -> Vec<String> {
        vocab::normalize(&self.description)
    }
}

impl fmt::Display for IntentSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.service, self.intent)
    }
}

/// A labeled utterance. `words` caches the normalized tokenization of
/// `text`; token ids are produced against a vocabulary on demand.
#[derive(Debug, Clone)]
pub struct UtteranceRecord {
    pub intent: Arc<IntentSpec>,
    pub text: String,
    pub words: Vec<String>,
}

impl UtteranceRecord {
    pub fn new(intent: Arc<IntentSpec>, text: &str) -> UtteranceRecord {
        UtteranceRecord { intent, words: vocab::normalize(text), text: text.to_string() }
    }

    pub fn tokens(&self, vocab: &Vocabulary) -> Vec<TokenId> {
        vocab.encode_words(&self.words)
    }
}

/// Wire format of one dataset line. Generated datasets carry extra fields
/// which plain ingestion ignores, so they re-ingest directly.
#[derive(Debug, Serialize, Deserialize)]
pub struct RawRecord {
    pub service: String,
    pub intent: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    pub utterance: String,
}

/// An in-memory dataset with interned intent specs, preserving file order.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    records: Vec<UtteranceRecord>,
    specs: Vec<Arc<IntentSpec>>,
}

impl Corpus {
    pub fn records(&self) -> &[UtteranceRecord] {
        &self.records
    }

    /// Unique intent specs in first-appearance order.
    pub fn specs(&self) -> &[Arc<IntentSpec>] {
        &self.specs
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Records belonging to one intent.
    pub fn records_for(&self, spec: &IntentSpec) -> impl Iterator<Item = &UtteranceRecord> {
        self.records.iter().filter(move |r| r.intent.as_ref() == spec)
    }

    pub fn from_records(records: Vec<UtteranceRecord>) -> Corpus {
        let mut specs: Vec<Arc<IntentSpec>> = Vec::new();
        let mut seen: HashSet<(String, String)> = HashSet::new();
        for r in &records {
            let key = (r.intent.service.clone(), r.intent.intent.clone());
            if seen.insert(key) {
                specs.push(Arc::clone(&r.intent));
            }
        }
        Corpus { records, specs }
    }

    /// Token frequency counts over all utterances.
    pub fn token_counts(&self) -> HashMap<String, usize> {
        let mut counts = HashMap::new();
        for r in &self.records {
            for w in &r.words {
                *counts.entry(w.clone()).or_insert(0) += 1;
            }
        }
        counts
    }

    /// Serialize to line-delimited records.
    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for r in &self.records {
            let raw = RawRecord {
                service: r.intent.service.clone(),
                intent: r.intent.intent.clone(),
                description: Some(r.intent.description.clone()),
                utterance: r.text.clone(),
            };
            out.push_str(&serde_json::to_string(&raw).map_err(|e| Error::Parse {
                line: 0,
                msg: e.to_string(),
            })?);
            out.push('\n');
        }
        Ok(out)
    }
}

/// Load a line-delimited record file. Identical `(service, intent)` pairs
/// share one interned spec; conflicting descriptions for the same pair are a
/// parse error. Blank lines are skipped.
pub fn load_records(path: &Path) -> Result<Corpus> {
    let file = std::fs::File::open(path)?;
    let reader = BufReader::new(file);
    let mut interned: HashMap<(String, String), Arc<IntentSpec>> = HashMap::new();
    let mut records = Vec::new();
    let mut specs = Vec::new();

    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawRecord = serde_json::from_str(&line)
            .map_err(|e| Error::Parse { line: line_no, msg: e.to_string() })?;
        if raw.utterance.trim().is_empty() {
            return Err(Error::Parse { line: line_no, msg: "empty utterance".into() });
        }
        let spec = IntentSpec::new(&raw.service, &raw.intent, raw.description.as_deref())
            .map_err(|e| Error::Parse { line: line_no, msg: e.to_string() })?;
        let key = (raw.service.clone(), raw.intent.clone());
        let shared = match interned.get(&key) {
            Some(existing) => {
                if existing.description != spec.description {
                    return Err(Error::Parse {
                        line: line_no,
                        msg: format!(
                            "conflicting descriptions for {}: '{}' vs '{}'",
                            spec.label(),
                            existing.description,
                            spec.description
                        ),
                    });
                }
                Arc::clone(existing)
            }
            None => {
                let arc = Arc::new(spec);
                interned.insert(key, Arc::clone(&arc));
                specs.push(Arc::clone(&arc));
                arc
            }
        };
        records.push(UtteranceRecord::new(shared, &raw.utterance));
    }

    if records.is_empty() {
        return Err(Error::EmptyCorpus(path.display().to_string()));
    }
    Ok(Corpus { records, specs })
}

/// Build the word vocabulary from a corpus. Counts utterance tokens only;
/// description words ride in via the records that mention them.
pub fn build_vocabulary(corpus: &Corpus, min_freq: usize) -> Result<Vocabulary> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus("cannot build vocabulary".into()));
    }
    if min_freq < 1 {
        return Err(Error::InvalidConfig("min_freq must be >= 1".into()));
    }
    Ok(Vocabulary::from_counts(&corpus.token_counts(), min_freq))
}

/// One encoded training item: condition span bracketed by the condition
/// markers, masked out of the target, utterance and EOS left as the loss
/// positions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrainingExample {
    pub input_ids: Vec<TokenId>,
    pub target_ids: Vec<TokenId>,
    /// True exactly where the target is a real token (utterance + EOS).
    pub loss_mask: Vec<bool>,
    /// Set when the utterance tail was cut to fit the context window.
    pub truncated: bool,
}

impl TrainingExample {
    pub fn len(&self) -> usize {
        self.input_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.input_ids.is_empty()
    }

    pub fn unmasked_count(&self) -> usize {
        self.loss_mask.iter().filter(|&&m| m).count()
    }

    /// Check the layout invariants; used by tests and debug assertions.
    pub fn validate(&self) -> Result<()> {
        if self.input_ids.len() != self.target_ids.len()
            || self.input_ids.len() != self.loss_mask.len()
        {
            return Err(Error::ShapeMismatch("example field lengths differ".into()));
        }
        for (i, &m) in self.loss_mask.iter().enumerate() {
            if m && self.target_ids[i] == MASK {
                return Err(Error::ShapeMismatch(format!("unmasked MASK target at {i}")));
            }
            if !m && self.target_ids[i] != MASK {
                return Err(Error::ShapeMismatch(format!("masked position {i} has a real target")));
            }
        }
        if self.unmasked_count() == 0 {
            return Err(Error::EmptySequence("example has no loss positions"));
        }
        Ok(())
    }
}

/// Layout: `[BOS, <cond>, description, </cond>, utterance, EOS]` with the
/// target masked over BOS and the condition span. When the whole thing
/// exceeds `context_length` the utterance tail is dropped (EOS kept); the
/// condition is never cut and a condition that cannot fit is an error.
pub fn encode_example(
    intent: &IntentSpec,
    utterance: &str,
    vocab: &Vocabulary,
    context_length: usize,
) -> Result<TrainingExample> {
    let desc_ids = vocab.encode_words(&intent.description_words());
    if desc_ids.is_empty() {
        return Err(Error::EmptySequence("intent description"));
    }
    let utt_ids = vocab.encode_text(utterance);
    if utt_ids.is_empty() {
        return Err(Error::EmptySequence("utterance"));
    }
    encode_from_ids(&desc_ids, &utt_ids, context_length)
}

/// Same layout from already-encoded ids.
pub fn encode_from_ids(
    desc_ids: &[TokenId],
    utt_ids: &[TokenId],
    context_length: usize,
) -> Result<TrainingExample> {
    // BOS + <cond> + desc + </cond> ... + EOS
    let prefix_len = 3 + desc_ids.len();
    if prefix_len + 1 > context_length {
        return Err(Error::ConditionTooLong { needed: prefix_len + 1, context: context_length });
    }
    let room = context_length - prefix_len - 1;
    let truncated = utt_ids.len() > room;
    let kept = if truncated { room } else { utt_ids.len() };

    let mut input_ids = Vec::with_capacity(prefix_len + kept + 1);
    input_ids.push(BOS);
    input_ids.push(COND_OPEN);
    input_ids.extend_from_slice(desc_ids);
    input_ids.push(COND_CLOSE);
    input_ids.extend_from_slice(&utt_ids[..kept]);
    input_ids.push(EOS);

    let mut target_ids = vec![MASK; prefix_len];
    target_ids.extend_from_slice(&utt_ids[..kept]);
    target_ids.push(EOS);

    let mut loss_mask = vec![false; prefix_len];
    loss_mask.extend(std::iter::repeat(true).take(kept + 1));

    let example = TrainingExample { input_ids, target_ids, loss_mask, truncated };
    debug_assert!(example.validate().is_ok());
    Ok(example)
}

/// Unconditional layout `[BOS, utterance, EOS]` used for base-model training;
/// only BOS is masked.
pub fn encode_unconditional(utt_ids: &[TokenId], context_length: usize) -> Result<TrainingExample> {
    if utt_ids.is_empty() {
        return Err(Error::EmptySequence("utterance"));
    }
    if context_length < 2 {
        return Err(Error::SequenceTooLong { len: 2, context: context_length });
    }
    let room = context_length - 2;
    let truncated = utt_ids.len() > room;
    let kept = if truncated { room } else { utt_ids.len() };

    let mut input_ids = Vec::with_capacity(kept + 2);
    input_ids.push(BOS);
    input_ids.extend_from_slice(&utt_ids[..kept]);
    input_ids.push(EOS);

    let mut target_ids = vec![MASK];
    target_ids.extend_from_slice(&utt_ids[..kept]);
    target_ids.push(EOS);

    let mut loss_mask = vec![false];
    loss_mask.extend(std::iter::repeat(true).take(kept + 1));

    Ok(TrainingExample { input_ids, target_ids, loss_mask, truncated })
}

/// Per-service partition of intents for the seen side of a split.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeenService {
    pub service: String,
    pub train_intents: Vec<String>,
    pub test_intents: Vec<String>,
}

/// Which services are seen (with their train/test intent partition) and
/// which are unseen. Unseen services contribute to the test side only.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplitPlan {
    pub seen: Vec<SeenService>,
    pub unseen_services: Vec<String>,
}

impl SplitPlan {
    pub fn validate(&self) -> Result<()> {
        let seen_names: HashSet<&str> = self.seen.iter().map(|s| s.service.as_str()).collect();
        if seen_names.len() != self.seen.len() {
            return Err(Error::InvalidPlan("duplicate seen service".into()));
        }
        for unseen in &self.unseen_services {
            if seen_names.contains(unseen.as_str()) {
                return Err(Error::InvalidPlan(format!(
                    "service '{unseen}' is listed as both seen and unseen"
                )));
            }
        }
        for svc in &self.seen {
            let train: HashSet<&str> = svc.train_intents.iter().map(|s| s.as_str()).collect();
            for t in &svc.test_intents {
                if train.contains(t.as_str()) {
                    return Err(Error::InvalidPlan(format!(
                        "intent '{}' of service '{}' is in both train and test",
                        t, svc.service
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<SplitPlan> {
        let plan: SplitPlan = serde_json::from_str(text)
            .map_err(|e| Error::InvalidPlan(e.to_string()))?;
        plan.validate()?;
        Ok(plan)
    }
}

/// Result of applying a split plan. Records the plan does not cover are
/// reported in `dropped` rather than vanishing.
#[derive(Debug)]
pub struct SplitOutcome {
    pub train: Corpus,
    pub test: Corpus,
    pub dropped: Vec<UtteranceRecord>,
}

/// Partition a corpus: train gets seen services' train intents, test gets
/// unseen services plus seen services' test intents.
pub fn make_split(corpus: &Corpus, plan: &SplitPlan) -> Result<SplitOutcome> {
    plan.validate()?;

    let mut services_in_corpus: HashMap<&str, HashSet<&str>> = HashMap::new();
    for spec in corpus.specs() {
        services_in_corpus
            .entry(spec.service.as_str())
            .or_default()
            .insert(spec.intent.as_str());
    }

    for unseen in &plan.unseen_services {
        if !services_in_corpus.contains_key(unseen.as_str()) {
            return Err(Error::UnknownInPlan { kind: "service", name: unseen.clone() });
        }
    }
    for svc in &plan.seen {
        let Some(intents) = services_in_corpus.get(svc.service.as_str()) else {
            return Err(Error::UnknownInPlan { kind: "service", name: svc.service.clone() });
        };
        for intent in svc.train_intents.iter().chain(&svc.test_intents) {
            if !intents.contains(intent.as_str()) {
                return Err(Error::UnknownInPlan {
                    kind: "intent",
                    name: format!("{}/{}", svc.service, intent),
                });
            }
        }
    }

    #[derive(Clone, Copy, PartialEq)]
    enum Side {
        Train,
        Test,
        Dropped,
    }
    let mut side_of: HashMap<(String, String), Side> = HashMap::new();
    for svc in &plan.seen {
        for intent in &svc.train_intents {
            side_of.insert((svc.service.clone(), intent.clone()), Side::Train);
        }
        for intent in &svc.test_intents {
            side_of.insert((svc.service.clone(), intent.clone()), Side::Test);
        }
    }
    for unseen in &plan.unseen_services {
        for intent in &services_in_corpus[unseen.as_str()] {
            side_of.insert((unseen.clone(), intent.to_string()), Side::Test);
        }
    }

    let mut train = Vec::new();
    let mut test = Vec::new();
    let mut dropped = Vec::new();
    for record in corpus.records() {
        let key = (record.intent.service.clone(), record.intent.intent.clone());
        match side_of.get(&key).copied().unwrap_or(Side::Dropped) {
            Side::Train => train.push(record.clone()),
            Side::Test => test.push(record.clone()),
            Side::Dropped => dropped.push(record.clone()),
        }
    }

    Ok(SplitOutcome {
        train: Corpus::from_records(train),
        test: Corpus::from_records(test),
        dropped,
    })
}

/// A single reference utterance used for one-shot adaptation of one intent.
#[derive(Debug, Clone)]
pub struct ReferenceExample {
    pub intent: Arc<IntentSpec>,
    pub text: String,
    pub words: Vec<String>,
}

impl ReferenceExample {
    pub fn new(intent: Arc<IntentSpec>, text: &str) -> Result<ReferenceExample> {
        let words = vocab::normalize(text);
        if words.is_empty() {
            return Err(Error::EmptySequence("reference utterance"));
        }
        Ok(ReferenceExample { intent, text: text.to_string(), words })
    }

    pub fn tokens(&self, vocab: &Vocabulary) -> Vec<TokenId> {
        vocab.encode_words(&self.words)
    }
}

/// Wire format of one reference line.
#[derive(Debug, Serialize, Deserialize)]
pub struct RawReference {
    pub service: String,
    pub intent: String,
    pub reference_utterance: String,
}

/// Load reference examples, interning specs against the given corpus so the
/// descriptions match.
pub fn load_references(path: &Path, corpus: &Corpus) -> Result<Vec<ReferenceExample>> {
    let file = std::fs::File::open(path)?;
    let reader = BufReader::new(file);
    let by_key: HashMap<(&str, &str), &Arc<IntentSpec>> = corpus
        .specs()
        .iter()
        .map(|s| ((s.service.as_str(), s.intent.as_str()), s))
        .collect();

    let mut refs = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawReference = serde_json::from_str(&line)
            .map_err(|e| Error::Parse { line: line_no, msg: e.to_string() })?;
        let spec = by_key
            .get(&(raw.service.as_str(), raw.intent.as_str()))
            .map(|s| Arc::clone(s))
            .unwrap_or(Arc::new(IntentSpec::new(&raw.service, &raw.intent, None).map_err(
                |e| Error::Parse { line: line_no, msg: e.to_string() },
            )?));
        refs.push(
            ReferenceExample::new(spec, &raw.reference_utterance)
                .map_err(|e| Error::Parse { line: line_no, msg: e.to_string() })?,
        );
    }
    Ok(refs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_lines(lines: &[&str]) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        for l in lines {
            writeln!(f, "{l}").unwrap();
        }
        f
    }

    fn small_vocab(texts: &[&str]) -> Vocabulary {
        let records: Vec<UtteranceRecord> = texts
            .iter()
            .map(|t| {
                UtteranceRecord::new(
                    Arc::new(IntentSpec::new("svc", "int", None).unwrap()),
                    t,
                )
            })
            .collect();
        build_vocabulary(&Corpus::from_records(records), 1).unwrap()
    }

    #[test]
    fn identical_pairs_intern_to_one_spec() {
        let f = write_lines(&[
            r#"{"service":"music","intent":"play_song","utterance":"play a song"}"#,
            r#"{"service":"music","intent":"play_song","utterance":"play the song"}"#,
        ]);
        let corpus = load_records(f.path()).unwrap();
        assert_eq!(corpus.len(), 2);
        assert_eq!(corpus.specs().len(), 1);
        assert!(Arc::ptr_eq(&corpus.records()[0].intent, &corpus.records()[1].intent));
        assert_eq!(corpus.specs()[0].description, "music play song");
    }

    #[test]
    fn missing_utterance_field_is_a_parse_error_with_line() {
        let f = write_lines(&[
            r#"{"service":"music","intent":"play_song","utterance":"play a song"}"#,
            r#"{"service":"music","intent":"play_song"}"#,
        ]);
        match load_records(f.path()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn empty_file_is_an_empty_corpus_error() {
        let f = write_lines(&[]);
        assert!(matches!(load_records(f.path()), Err(Error::EmptyCorpus(_))));
    }

    #[test]
    fn encode_example_layout_matches_definition() {
        let vocab = small_vocab(&["play a song music play song"]);
        let spec = IntentSpec::new("music", "play_song", None).unwrap();
        let ex = encode_example(&spec, "play a song", &vocab, 48).unwrap();

        let id = |w: &str| vocab.id_of(w).unwrap();
        assert_eq!(
            ex.input_ids,
            vec![
                BOS,
                COND_OPEN,
                id("music"),
                id("play"),
                id("song"),
                COND_CLOSE,
                id("play"),
                id("a"),
                id("song"),
                EOS
            ]
        );
        assert_eq!(
            ex.target_ids,
            vec![MASK, MASK, MASK, MASK, MASK, MASK, id("play"), id("a"), id("song"), EOS]
        );
        assert_eq!(
            ex.loss_mask,
            vec![false, false, false, false, false, false, true, true, true, true]
        );
        assert!(!ex.truncated);
        ex.validate().unwrap();
    }

    #[test]
    fn one_token_utterance_has_two_loss_positions() {
        let vocab = small_vocab(&["hello music greet"]);
        let spec = IntentSpec::new("music", "greet", None).unwrap();
        let ex = encode_example(&spec, "hello", &vocab, 48).unwrap();
        assert_eq!(ex.unmasked_count(), 2);
    }

    #[test]
    fn over_length_utterance_truncates_tail_not_condition() {
        let vocab = small_vocab(&["a b c d e f g h music play"]);
        let spec = IntentSpec::new("music", "play", None).unwrap();
        // prefix = BOS <cond> music play </cond> = 5, +EOS = 6; room = 2
        let ex = encode_example(&spec, "a b c d e f g h", &vocab, 8).unwrap();
        assert!(ex.truncated);
        assert_eq!(ex.len(), 8);
        let id = |w: &str| vocab.id_of(w).unwrap();
        assert_eq!(
            ex.input_ids,
            vec![BOS, COND_OPEN, id("music"), id("play"), COND_CLOSE, id("a"), id("b"), EOS]
        );
        ex.validate().unwrap();
    }

    #[test]
    fn condition_that_cannot_fit_is_an_error() {
        let vocab = small_vocab(&["one two three four five six"]);
        let spec = IntentSpec::new("one two", "three four five six", None).unwrap();
        assert!(matches!(
            encode_example(&spec, "one", &vocab, 8),
            Err(Error::ConditionTooLong { .. })
        ));
    }

    fn split_fixture() -> (Corpus, SplitPlan) {
        let mk = |svc: &str, int: &str, utt: &str| {
            UtteranceRecord::new(Arc::new(IntentSpec::new(svc, int, None).unwrap()), utt)
        };
        let corpus = Corpus::from_records(vec![
            mk("music", "play_song", "play a song"),
            mk("music", "play_song", "play the song"),
            mk("music", "create_playlist", "create a playlist"),
            mk("plane", "book_flight", "book a flight"),
            mk("plane", "find_flight", "find a flight"),
        ]);
        let plan = SplitPlan {
            seen: vec![SeenService {
                service: "music".into(),
                train_intents: vec!["play_song".into()],
                test_intents: vec!["create_playlist".into()],
            }],
            unseen_services: vec!["plane".into()],
        };
        (corpus, plan)
    }

    #[test]
    fn unseen_service_records_go_to_test_only() {
        let (corpus, plan) = split_fixture();
        let out = make_split(&corpus, &plan).unwrap();
        assert_eq!(out.train.len(), 2);
        assert_eq!(out.test.len(), 3);
        assert!(out.train.records().iter().all(|r| r.intent.service != "plane"));
        assert_eq!(out.test.records().iter().filter(|r| r.intent.service == "plane").count(), 2);
        assert!(out.dropped.is_empty());
    }

    #[test]
    fn split_is_a_partition_and_reports_dropped() {
        let (mut corpus, plan) = split_fixture();
        // An intent the plan does not mention.
        let extra = UtteranceRecord::new(
            Arc::new(IntentSpec::new("music", "lookup_song", None).unwrap()),
            "look up a song",
        );
        let mut records = corpus.records().to_vec();
        records.push(extra);
        corpus = Corpus::from_records(records);

        let out = make_split(&corpus, &plan).unwrap();
        assert_eq!(out.train.len() + out.test.len() + out.dropped.len(), corpus.len());
        assert_eq!(out.dropped.len(), 1);
        assert_eq!(out.dropped[0].intent.intent, "lookup_song");

        let train_intents: HashSet<String> =
            out.train.specs().iter().map(|s| s.label()).collect();
        let test_intents: HashSet<String> =
            out.test.specs().iter().map(|s| s.label()).collect();
        assert!(train_intents.is_disjoint(&test_intents));
    }

    #[test]
    fn plan_referencing_unknown_intent_is_an_error_naming_it() {
        let (corpus, mut plan) = split_fixture();
        plan.seen[0].train_intents.push("no_such_intent".into());
        match make_split(&corpus, &plan) {
            Err(Error::UnknownInPlan { kind, name }) => {
                assert_eq!(kind, "intent");
                assert!(name.contains("no_such_intent"));
            }
            other => panic!("expected UnknownInPlan, got {other:?}"),
        }
    }

    #[test]
    fn empty_unseen_set_keeps_seen_test_intents_only() {
        let (corpus, mut plan) = split_fixture();
        plan.unseen_services.clear();
        let out = make_split(&corpus, &plan).unwrap();
        assert_eq!(out.test.len(), 1);
        assert_eq!(out.test.records()[0].intent.intent, "create_playlist");
        // Plane records are uncovered by the plan now.
        assert_eq!(out.dropped.len(), 2);
    }

    #[test]
    fn overlapping_train_test_intents_rejected() {
        let (corpus, mut plan) = split_fixture();
        plan.seen[0].test_intents.push("play_song".into());
        assert!(matches!(make_split(&corpus, &plan), Err(Error::InvalidPlan(_))));
    }
}
