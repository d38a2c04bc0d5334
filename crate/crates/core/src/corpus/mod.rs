//! Annotated review corpus: documents, tokenization, vocabulary and splits.
//!
//! Documents are read from a line-oriented JSON format, one review per line:
//!
//! ```text
//! {"id": "cv000", "label": "neg", "sentences": [{"text": "...", "rationale": true}, ...]}
//! ```
//!
//! `rationale` is `null` on every sentence of an unannotated document and a
//! boolean on every sentence of an annotated one.

mod spans;
mod split;
pub mod synth;
mod tokenize;
mod vocab;

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use spans::spans_to_sentence_labels;
pub use split::{make_split, Split};
pub use tokenize::{segment_sentences, tokenize, MAX_SENTENCE_TOKENS};
pub use vocab::{build_vocab, Vocabulary, PAD_ID, UNK_ID};

use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Neg,
    Pos,
}

impl Label {
    /// Class index used by the classifiers: `Neg` = 0, `Pos` = 1.
    pub fn index(self) -> usize {
        match self {
            Label::Neg => 0,
            Label::Pos => 1,
        }
    }

    pub fn from_index(index: usize) -> Option<Label> {
        match index {
            0 => Some(Label::Neg),
            1 => Some(Label::Pos),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Neg => "neg",
            Label::Pos => "pos",
        }
    }
}

impl std::fmt::Display for Label {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sentence {
    pub text: String,
    pub tokens: Vec<String>,
    /// `None` exactly when the enclosing document is unannotated.
    pub rationale: Option<bool>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Document {
    pub id: String,
    pub label: Label,
    pub sentences: Vec<Sentence>,
    pub annotated: bool,
}

impl Document {
    /// Builds a document from raw sentence texts, dropping sentences that
    /// tokenize to nothing.
    pub fn new(
        id: impl Into<String>,
        label: Label,
        sentences: impl IntoIterator<Item = (String, Option<bool>)>,
    ) -> Result<Document> {
        let id = id.into();
        let raw: Vec<(String, Option<bool>)> = sentences.into_iter().collect();
        let annotated = raw.first().is_some_and(|(_, r)| r.is_some());
        if raw.iter().any(|(_, r)| r.is_some() != annotated) {
            return Err(Error::Invalid(format!(
                "document `{id}` mixes null and non-null rationale flags"
            )));
        }
        let sentences: Vec<Sentence> = raw
            .into_iter()
            .filter_map(|(text, rationale)| {
                let tokens = tokenize(&text);
                (!tokens.is_empty()).then_some(Sentence {
                    text,
                    tokens,
                    rationale,
                })
            })
            .collect();
        if sentences.is_empty() {
            return Err(Error::Invalid(format!(
                "document `{id}` has no non-empty sentence"
            )));
        }
        Ok(Document {
            id,
            label,
            sentences,
            annotated,
        })
    }

    /// Builds a document from running text and optional character-level
    /// rationale spans. `None` spans make an unannotated document.
    pub fn from_text(
        id: impl Into<String>,
        label: Label,
        text: &str,
        rationale_spans: Option<&[(usize, usize)]>,
    ) -> Result<Document> {
        let bounds = segment_sentences(text);
        let flags: Vec<Option<bool>> = match rationale_spans {
            Some(spans) => spans_to_sentence_labels(text, &bounds, spans)?
                .into_iter()
                .map(Some)
                .collect(),
            None => vec![None; bounds.len()],
        };
        let chars: Vec<char> = text.chars().collect();
        let sentences = bounds
            .iter()
            .zip(flags)
            .map(|(&(a, b), flag)| (chars[a..b].iter().collect::<String>(), flag));
        Document::new(id, label, sentences)
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    /// Indices of sentences flagged as rationales (empty when unannotated).
    pub fn rationale_indices(&self) -> Vec<usize> {
        self.sentences
            .iter()
            .enumerate()
            .filter(|(_, s)| s.rationale == Some(true))
            .map(|(i, _)| i)
            .collect()
    }
}

#[derive(Serialize, Deserialize)]
struct Record {
    id: String,
    label: Label,
    sentences: Vec<RecordSentence>,
}

#[derive(Serialize, Deserialize)]
struct RecordSentence {
    text: String,
    #[serde(default)]
    rationale: Option<bool>,
}

/// Reads a corpus-JSONL file. Document order follows the file.
pub fn load_corpus(path: impl AsRef<Path>) -> Result<Vec<Document>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_corpus(file)
}

pub fn read_corpus(reader: impl Read) -> Result<Vec<Document>> {
    let mut docs = Vec::new();
    let mut seen = HashMap::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let record: Record = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        if let Some(first) = seen.insert(record.id.clone(), line_no) {
            return Err(Error::Parse {
                line: line_no,
                message: format!(
                    "duplicate document id `{}` (first on line {first})",
                    record.id
                ),
            });
        }
        let doc = Document::new(
            record.id,
            record.label,
            record.sentences.into_iter().map(|s| (s.text, s.rationale)),
        )
        .map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        docs.push(doc);
    }
    Ok(docs)
}

pub fn write_corpus(docs: &[Document], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    write_corpus_to(docs, &mut out).map_err(|e| Error::io(path, e))?;
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn write_corpus_to(docs: &[Document], out: &mut impl Write) -> std::io::Result<()> {
    for doc in docs {
        let record = Record {
            id: doc.id.clone(),
            label: doc.label,
            sentences: doc
                .sentences
                .iter()
                .map(|s| RecordSentence {
                    text: s.text.clone(),
                    rationale: s.rationale,
                })
                .collect(),
        };
        serde_json::to_writer(&mut *out, &record)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Documents indexed by id.
#[derive(Clone, Debug, Default)]
pub struct Corpus {
    docs: Vec<Document>,
    index: HashMap<String, usize>,
}

impl Corpus {
    pub fn new(docs: Vec<Document>) -> Result<Corpus> {
        let mut index = HashMap::with_capacity(docs.len());
        for (i, doc) in docs.iter().enumerate() {
            if index.insert(doc.id.clone(), i).is_some() {
                return Err(Error::DuplicateDocument(doc.id.clone()));
            }
        }
        Ok(Corpus { docs, index })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Corpus> {
        Corpus::new(load_corpus(path)?)
    }

    pub fn get(&self, id: &str) -> Option<&Document> {
        self.index.get(id).map(|&i| &self.docs[i])
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    /// Looks up every id, failing on the first unknown one.
    pub fn resolve<'a, S: AsRef<str>>(&'a self, ids: &[S]) -> Result<Vec<&'a Document>> {
        ids.iter()
            .map(|id| {
                self.get(id.as_ref())
                    .ok_or_else(|| Error::UnknownDocument(id.as_ref().to_string()))
            })
            .collect()
    }

    pub fn documents(&self) -> &[Document] {
        &self.docs
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const FIXTURE: &str = concat!(
        r#"{"id":"d1","label":"pos","sentences":[{"text":"A fine film .","rationale":true},{"text":"  ","rationale":false},{"text":"The plot moves .","rationale":false}]}"#,
        "\n",
        r#"{"id":"d2","label":"neg","sentences":[{"text":"Dull and long .","rationale":null}]}"#,
        "\n",
        r#"{"id":"d3","label":"neg","sentences":[{"text":"Awful .","rationale":true},{"text":"Really awful !","rationale":true}]}"#,
        "\n",
    );

    /// Independent single-pass reading of the fixture: counts sentences
    /// whose text has any non-whitespace character.
    fn reference_counts(text: &str) -> Vec<(String, usize, bool)> {
        text.lines()
            .map(|line| {
                let v: serde_json::Value = serde_json::from_str(line).unwrap();
                let sents = v["sentences"].as_array().unwrap();
                let kept = sents
                    .iter()
                    .filter(|s| {
                        s["text"]
                            .as_str()
                            .unwrap()
                            .chars()
                            .any(|c| !c.is_whitespace())
                    })
                    .count();
                let annotated = sents.iter().all(|s| !s["rationale"].is_null());
                (v["id"].as_str().unwrap().to_string(), kept, annotated)
            })
            .collect()
    }

    #[test]
    fn empty_sentences_are_dropped() {
        let docs = read_corpus(FIXTURE.as_bytes()).unwrap();
        let got: Vec<(String, usize, bool)> = docs
            .iter()
            .map(|d| (d.id.clone(), d.len(), d.annotated))
            .collect();
        assert_eq!(got, reference_counts(FIXTURE));
        assert_eq!(docs[0].sentences[1].text, "The plot moves .");
        assert_eq!(docs[0].rationale_indices(), vec![0]);
        assert_eq!(docs[1].sentences[0].rationale, None);
    }

    #[test]
    fn empty_input_is_empty_corpus() {
        assert!(read_corpus("".as_bytes()).unwrap().is_empty());
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let text = format!("{}\n{{not json\n", FIXTURE.lines().next().unwrap());
        match read_corpus(text.as_bytes()).unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn duplicate_id_is_rejected() {
        let first = FIXTURE.lines().next().unwrap();
        let text = format!("{first}\n{first}\n");
        match read_corpus(text.as_bytes()).unwrap_err() {
            Error::Parse { line, message } => {
                assert_eq!(line, 2);
                assert!(message.contains("duplicate"));
            }
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn mixed_rationale_flags_are_rejected() {
        let text = r#"{"id":"x","label":"pos","sentences":[{"text":"a","rationale":true},{"text":"b","rationale":null}]}"#;
        assert!(matches!(
            read_corpus(text.as_bytes()).unwrap_err(),
            Error::Parse { line: 1, .. }
        ));
    }

    #[test]
    fn round_trip_preserves_documents() {
        let docs = read_corpus(FIXTURE.as_bytes()).unwrap();
        let mut buf = Vec::new();
        write_corpus_to(&docs, &mut buf).unwrap();
        assert_eq!(read_corpus(buf.as_slice()).unwrap(), docs);
    }

    #[test]
    fn from_text_applies_span_overlap() {
        let text = "I loved it. The plot is about a dog. Great acting!";
        let doc = Document::from_text("t", Label::Pos, text, Some(&[(40, 45)])).unwrap();
        assert_eq!(doc.len(), 3);
        assert_eq!(doc.rationale_indices(), vec![2]);
        let plain = Document::from_text("u", Label::Pos, text, None).unwrap();
        assert!(!plain.annotated);
    }
}
