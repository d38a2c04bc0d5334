use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{Document, MAX_SENTENCE_TOKENS};
use crate::{Error, Result};

pub const PAD_ID: usize = 0;
pub const UNK_ID: usize = 1;
const PAD_TOKEN: &str = "<pad>";
const UNK_TOKEN: &str = "<unk>";

/// Dense token to id mapping. Ids 0 and 1 are padding and unknown.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    ids: HashMap<String, usize>,
}

impl Vocabulary {
    fn from_tokens(tokens: Vec<String>) -> Result<Vocabulary> {
        let mut ids = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if ids.insert(t.clone(), i).is_some() {
                return Err(Error::Invalid(format!(
                    "token `{t}` listed twice in vocabulary"
                )));
            }
        }
        Ok(Vocabulary { tokens, ids })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> usize {
        self.ids.get(token).copied().unwrap_or(UNK_ID)
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    /// Ids for the tokens of one sentence, truncated to
    /// [`MAX_SENTENCE_TOKENS`].
    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<usize> {
        tokens
            .iter()
            .take(MAX_SENTENCE_TOKENS)
            .map(|t| self.id(t.as_ref()))
            .collect()
    }

    pub fn tokens(&self) -> impl Iterator<Item = (usize, &str)> {
        self.tokens.iter().enumerate().map(|(i, t)| (i, t.as_str()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        self.write_to(&mut out).map_err(|e| Error::io(path, e))?;
        out.flush().map_err(|e| Error::io(path, e))
    }

    /// Writes one `token<TAB>id` line per entry, in id order.
    pub fn write_to(&self, out: &mut impl Write) -> std::io::Result<()> {
        for (i, t) in self.tokens.iter().enumerate() {
            writeln!(out, "{t}\t{i}")?;
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Vocabulary> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Vocabulary::read_from(file)
    }

    pub fn read_from(reader: impl Read) -> Result<Vocabulary> {
        let mut tokens = Vec::new();
        for (i, line) in BufReader::new(reader).lines().enumerate() {
            let parse = |message: String| Error::Parse {
                line: i + 1,
                message,
            };
            let line = line.map_err(|e| parse(e.to_string()))?;
            if line.is_empty() {
                continue;
            }
            let (token, id) = line
                .rsplit_once('\t')
                .ok_or_else(|| parse("expected `token<TAB>id`".into()))?;
            let id: usize = id.parse().map_err(|_| parse(format!("bad id `{id}`")))?;
            if id != tokens.len() {
                return Err(parse(format!(
                    "id {id} breaks dense numbering, expected {}",
                    tokens.len()
                )));
            }
            tokens.push(token.to_string());
        }
        if tokens.len() < 2 || tokens[PAD_ID] != PAD_TOKEN || tokens[UNK_ID] != UNK_TOKEN {
            return Err(Error::Invalid(
                "vocabulary must start with the reserved <pad> and <unk> entries".into(),
            ));
        }
        Vocabulary::from_tokens(tokens)
    }
}

/// Builds a vocabulary from training documents.
///
/// Tokens seen at least `min_count` times get ids from 2 upward in
/// descending frequency, ties broken lexicographically.
pub fn build_vocab(train_docs: &[&Document], min_count: usize) -> Result<Vocabulary> {
    if min_count == 0 {
        return Err(Error::Config("min_count must be at least 1".into()));
    }
    if train_docs.is_empty() {
        return Err(Error::Config(
            "cannot build a vocabulary from zero documents".into(),
        ));
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for token in train_docs
        .iter()
        .flat_map(|d| &d.sentences)
        .flat_map(|s| &s.tokens)
    {
        *counts.entry(token.as_str()).or_default() += 1;
    }
    let mut kept: Vec<(&str, usize)> = counts
        .into_iter()
        .filter(|&(t, c)| c >= min_count && t != PAD_TOKEN && t != UNK_TOKEN)
        .collect();
    kept.sort_unstable_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));

    let tokens = [PAD_TOKEN, UNK_TOKEN]
        .into_iter()
        .chain(kept.into_iter().map(|(t, _)| t))
        .map(str::to_string)
        .collect();
    Vocabulary::from_tokens(tokens)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Label;
    use rand::{Rng, SeedableRng};
    use std::collections::BTreeMap;

    fn doc(id: &str, text: &str) -> Document {
        Document::new(id, Label::Pos, [(text.to_string(), None)]).unwrap()
    }

    #[test]
    fn frequency_then_lexicographic_order() {
        let d = doc("a", "a a b");
        let v = build_vocab(&[&d], 1).unwrap();
        assert_eq!(v.id("a"), 2);
        assert_eq!(v.id("b"), 3);
        assert_eq!(v.id("zzz"), UNK_ID);
        assert_eq!(v.token(PAD_ID), Some("<pad>"));
    }

    #[test]
    fn below_threshold_maps_to_unknown() {
        let d = doc("a", "a b");
        let v = build_vocab(&[&d], 2).unwrap();
        assert_eq!(v.len(), 2);
        assert_eq!(v.id("a"), UNK_ID);
        assert_eq!(v.id("b"), UNK_ID);
    }

    #[test]
    fn rejects_bad_preconditions() {
        let d = doc("a", "x");
        assert!(build_vocab(&[&d], 0).is_err());
        assert!(build_vocab(&[], 1).is_err());
    }

    #[test]
    fn matches_count_and_sort_oracle() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let words: Vec<String> = (0..40).map(|i| format!("w{i}")).collect();
        let docs: Vec<Document> = (0..100)
            .map(|i| {
                let n = rng.gen_range(1..12);
                let text: Vec<&str> = (0..n)
                    .map(|_| {
                        words[rng.gen_range(0..words.len()) % (1 + rng.gen_range(0..40))].as_str()
                    })
                    .collect();
                doc(&format!("d{i}"), &text.join(" "))
            })
            .collect();
        let refs: Vec<&Document> = docs.iter().collect();
        let vocab = build_vocab(&refs, 2).unwrap();

        let mut counts: BTreeMap<String, usize> = BTreeMap::new();
        for d in &docs {
            for w in d.sentences[0].text.split(' ') {
                *counts.entry(w.to_string()).or_default() += 1;
            }
        }
        let mut expected: Vec<(String, usize)> =
            counts.into_iter().filter(|(_, c)| *c >= 2).collect();
        expected.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));

        assert_eq!(vocab.len(), expected.len() + 2);
        for (i, (w, _)) in expected.iter().enumerate() {
            assert_eq!(vocab.id(w), i + 2, "token {w}");
        }
    }

    #[test]
    fn file_round_trip_keeps_ids() {
        let d = doc("a", "the cat sat on the mat the end");
        let v = build_vocab(&[&d], 1).unwrap();
        let mut buf = Vec::new();
        v.write_to(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("<pad>\t0\n<unk>\t1\nthe\t2\n"));
        let back = Vocabulary::read_from(buf.as_slice()).unwrap();
        assert_eq!(back, v);
        for (id, tok) in v.tokens() {
            assert_eq!(back.id(tok), id);
        }
    }
}
