//! CoNLL-U reading, writing and tree validation.
//!
//! Multiword-token range lines (`3-4`) and empty nodes (`3.1`) are dropped:
//! every downstream computation works on syntactic words only.

use std::fmt;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};

/// One syntactic word of a dependency tree.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Token {
    /// 1-based position within the sentence.
    pub index: usize,
    pub form: String,
    pub lemma: String,
    pub upos: String,
    pub xpos: String,
    /// Head position; 0 is the artificial root.
    pub head: usize,
    pub deprel: String,
    /// Number of Unicode scalar values in `form`.
    pub char_count: usize,
}

impl Token {
    pub fn new(
        index: usize,
        form: &str,
        lemma: &str,
        upos: &str,
        xpos: &str,
        head: usize,
        deprel: &str,
    ) -> Self {
        Token {
            index,
            form: form.to_owned(),
            lemma: lemma.to_owned(),
            upos: upos.to_owned(),
            xpos: xpos.to_owned(),
            head,
            deprel: deprel.to_owned(),
            char_count: form.chars().count(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Sentence {
    /// Value of a `# sent_id = ...` comment, when present.
    pub sent_id: Option<String>,
    pub tokens: Vec<Token>,
}

impl Sentence {
    pub fn new(tokens: Vec<Token>) -> Self {
        Sentence {
            sent_id: None,
            tokens,
        }
    }

    /// Build a sentence from head indices alone; every other field is filled
    /// with placeholders and the relation defaults to `dep`.
    pub fn from_heads(heads: &[usize]) -> Self {
        let tokens = heads
            .iter()
            .enumerate()
            .map(|(i, &h)| {
                let deprel = if h == 0 { "root" } else { "dep" };
                Token::new(i + 1, "w", "w", "X", "X", h, deprel)
            })
            .collect();
        Sentence::new(tokens)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn heads(&self) -> Vec<usize> {
        self.tokens.iter().map(|t| t.head).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Document {
    pub id: String,
    pub sentences: Vec<Sentence>,
}

/// Parse CoNLL-U text into documents.
///
/// Documents are delimited by `# newdoc` comments; the id is taken from
/// `# newdoc id = X` and otherwise defaults to the 1-based document ordinal.
/// Text without any `# newdoc` comment forms a single document.
pub fn parse_conllu(text: &str, source: &str) -> Result<Vec<Document>> {
    let mut docs: Vec<Document> = Vec::new();
    let mut sentence = Sentence::default();
    let mut in_sentence = false;

    let err = |line: usize, message: String| Error::Parse {
        path: source.to_owned(),
        line,
        message,
    };

    for (lineno, raw) in text.lines().enumerate() {
        let lineno = lineno + 1;
        let line = raw.trim_end_matches('\r');

        if line.trim().is_empty() {
            if in_sentence {
                push_sentence(&mut docs, std::mem::take(&mut sentence));
                in_sentence = false;
            }
            continue;
        }

        if let Some(comment) = line.strip_prefix('#') {
            let comment = comment.trim();
            if comment.starts_with("newdoc") && !in_sentence {
                let id = comment
                    .strip_prefix("newdoc")
                    .and_then(|rest| rest.trim().strip_prefix("id"))
                    .and_then(|rest| rest.trim().strip_prefix('='))
                    .map(|id| id.trim().to_owned())
                    .unwrap_or_else(|| (docs.len() + 1).to_string());
                docs.push(Document {
                    id,
                    sentences: Vec::new(),
                });
            } else if let Some(rest) = comment.strip_prefix("sent_id") {
                if let Some(id) = rest.trim().strip_prefix('=') {
                    sentence.sent_id = Some(id.trim().to_owned());
                }
            }
            continue;
        }

        in_sentence = true;
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 10 {
            return Err(err(
                lineno,
                format!("expected 10 tab-separated columns, found {}", cols.len()),
            ));
        }

        let id = cols[0];
        if id.contains('-') || id.contains('.') {
            continue;
        }
        let index: usize = id
            .parse()
            .map_err(|_| err(lineno, format!("invalid token id '{id}'")))?;
        if index != sentence.tokens.len() + 1 {
            return Err(err(
                lineno,
                format!(
                    "token id {index} out of sequence (expected {})",
                    sentence.tokens.len() + 1
                ),
            ));
        }
        let head: usize = cols[6]
            .parse()
            .map_err(|_| err(lineno, format!("non-integer head '{}'", cols[6])))?;

        sentence
            .tokens
            .push(Token::new(index, cols[1], cols[2], cols[3], cols[4], head, cols[7]));
    }

    if in_sentence {
        push_sentence(&mut docs, sentence);
    }
    Ok(docs)
}

fn push_sentence(docs: &mut Vec<Document>, sentence: Sentence) {
    if docs.is_empty() {
        docs.push(Document {
            id: "1".to_owned(),
            sentences: Vec::new(),
        });
    }
    docs.last_mut().unwrap().sentences.push(sentence);
}

/// Serialize documents back to CoNLL-U. Columns not modelled by [`Token`]
/// are written as `_`.
pub fn write_conllu(docs: &[Document]) -> String {
    let mut out = String::new();
    for doc in docs {
        out.push_str(&format!("# newdoc id = {}\n", doc.id));
        for sentence in &doc.sentences {
            if let Some(id) = &sentence.sent_id {
                out.push_str(&format!("# sent_id = {id}\n"));
            }
            for t in &sentence.tokens {
                out.push_str(&format!(
                    "{}\t{}\t{}\t{}\t{}\t_\t{}\t{}\t_\t_\n",
                    t.index, t.form, t.lemma, t.upos, t.xpos, t.head, t.deprel
                ));
            }
            out.push('\n');
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum Violation {
    RootCount(usize),
    HeadOutOfRange { token: usize, head: usize },
    SelfHead { token: usize },
    Cycle { tokens: Vec<usize> },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::RootCount(n) => write!(f, "expected exactly one root, found {n}"),
            Violation::HeadOutOfRange { token, head } => {
                write!(f, "token {token} has out-of-range head {head}")
            }
            Violation::SelfHead { token } => write!(f, "token {token} is its own head"),
            Violation::Cycle { tokens } => write!(f, "cycle through tokens {tokens:?}"),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct TreeReport {
    pub violations: Vec<Violation>,
}

impl TreeReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn describe(&self) -> String {
        self.violations
            .iter()
            .map(ToString::to_string)
            .collect::<Vec<_>>()
            .join("; ")
    }
}

/// Check the single-rooted tree invariants of a sentence.
pub fn validate_tree(tokens: &[Token]) -> TreeReport {
    let n = tokens.len();
    let mut violations = Vec::new();

    let roots = tokens.iter().filter(|t| t.head == 0).count();
    if roots != 1 {
        violations.push(Violation::RootCount(roots));
    }

    let mut walkable = true;
    for t in tokens {
        if t.head > n {
            violations.push(Violation::HeadOutOfRange {
                token: t.index,
                head: t.head,
            });
            walkable = false;
        } else if t.head == t.index {
            violations.push(Violation::SelfHead { token: t.index });
            walkable = false;
        }
    }
    if !walkable {
        return TreeReport { violations };
    }

    // 0 = unvisited, 1 = on current path, 2 = reaches the root
    let mut state = vec![0u8; n + 1];
    state[0] = 2;
    for start in 1..=n {
        let mut path = Vec::new();
        let mut node = start;
        while state[node] == 0 {
            state[node] = 1;
            path.push(node);
            node = tokens[node - 1].head;
        }
        if state[node] == 1 {
            let pos = path.iter().position(|&p| p == node).unwrap();
            let mut cycle = path[pos..].to_vec();
            cycle.sort_unstable();
            violations.push(Violation::Cycle { tokens: cycle });
        }
        for p in path {
            state[p] = 2;
        }
    }

    TreeReport { violations }
}

/// What to do with sentences whose tree is invalid.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Deserialize, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum InvalidTreePolicy {
    #[default]
    Drop,
    Abort,
}

/// Validate every sentence in parallel. Invalid sentences are removed with a
/// logged warning, or abort the run, depending on `policy`. Sentence order
/// (and therefore each sentence's 1-based position) is preserved; a dropped
/// sentence leaves a `None` hole so positions stay aligned with region files.
pub fn validate_documents(
    docs: Vec<Document>,
    policy: InvalidTreePolicy,
) -> Result<Vec<ValidatedDocument>> {
    let mut out = Vec::with_capacity(docs.len());
    for doc in docs {
        let reports: Vec<TreeReport> = doc
            .sentences
            .par_iter()
            .map(|s| validate_tree(&s.tokens))
            .collect();
        let mut sentences = Vec::with_capacity(doc.sentences.len());
        for (i, (sentence, report)) in doc.sentences.into_iter().zip(reports).enumerate() {
            if report.is_valid() {
                sentences.push(Some(sentence));
            } else {
                match policy {
                    InvalidTreePolicy::Abort => {
                        return Err(Error::InvalidTree {
                            doc_id: doc.id.clone(),
                            sent_index: i + 1,
                            details: report.describe(),
                        })
                    }
                    InvalidTreePolicy::Drop => {
                        log::warn!(
                            "dropping sentence {} of document {}: {}",
                            i + 1,
                            doc.id,
                            report.describe()
                        );
                        sentences.push(None);
                    }
                }
            }
        }
        out.push(ValidatedDocument {
            id: doc.id,
            sentences,
        });
    }
    Ok(out)
}

/// A document after validation; `sentences[i]` is the sentence at 1-based
/// position `i + 1`, or `None` if it was dropped.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ValidatedDocument {
    pub id: String,
    pub sentences: Vec<Option<Sentence>>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(id: &str, form: &str, head: &str, rel: &str) -> String {
        format!("{id}\t{form}\t{form}\tNOUN\tNN\t_\t{head}\t{rel}\t_\t_\n")
    }

    #[test]
    fn four_token_sentence() {
        let text = [
            line("1", "a", "4", "nsubj"),
            line("2", "b", "4", "iobj"),
            line("3", "c", "4", "obj"),
            line("4", "d", "0", "root"),
        ]
        .concat();
        let docs = parse_conllu(&text, "t").unwrap();
        assert_eq!(docs.len(), 1);
        assert_eq!(docs[0].sentences.len(), 1);
        let s = &docs[0].sentences[0];
        assert_eq!(s.len(), 4);
        assert_eq!(s.heads(), vec![4, 4, 4, 0]);
        assert_eq!(s.tokens[3].deprel, "root");
    }

    #[test]
    fn range_and_empty_nodes_are_skipped() {
        let text = [
            line("1", "a", "2", "nsubj"),
            line("2", "b", "0", "root"),
            "3-4\tcd\t_\t_\t_\t_\t_\t_\t_\t_\n".to_owned(),
            line("3", "c", "2", "obj"),
            line("4", "d", "3", "case"),
            "4.1\te\t_\t_\t_\t_\t_\t_\t_\t_\n".to_owned(),
        ]
        .concat();
        let docs = parse_conllu(&text, "t").unwrap();
        let s = &docs[0].sentences[0];
        assert_eq!(s.len(), 4);
        assert_eq!(s.tokens[2].form, "c");
        assert_eq!(s.tokens[3].form, "d");
    }

    #[test]
    fn blank_line_separates_sentences() {
        let text = [
            line("1", "a", "0", "root"),
            "\n".to_owned(),
            line("1", "b", "0", "root"),
        ]
        .concat();
        let docs = parse_conllu(&text, "t").unwrap();
        assert_eq!(docs[0].sentences.len(), 2);
    }

    #[test]
    fn newdoc_comments_split_documents() {
        let text = [
            "# newdoc id = A\n".to_owned(),
            "# sent_id = A-1\n".to_owned(),
            line("1", "a", "0", "root"),
            "\n# newdoc\n".to_owned(),
            line("1", "b", "0", "root"),
        ]
        .concat();
        let docs = parse_conllu(&text, "t").unwrap();
        assert_eq!(docs.len(), 2);
        assert_eq!(docs[0].id, "A");
        assert_eq!(docs[1].id, "2");
        assert_eq!(docs[0].sentences[0].sent_id.as_deref(), Some("A-1"));
    }

    #[test]
    fn wrong_column_count_reports_line() {
        let text = format!("{}1\ta\tb\n", line("1", "x", "0", "root"));
        match parse_conllu(&text, "bad.conllu") {
            Err(Error::Parse { line, path, .. }) => {
                assert_eq!(line, 2);
                assert_eq!(path, "bad.conllu");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn non_integer_head_is_rejected() {
        let text = line("1", "a", "_", "root");
        assert!(matches!(
            parse_conllu(&text, "t"),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn char_count_uses_scalar_values() {
        let t = Token::new(1, "教授が", "教授", "NOUN", "名詞", 0, "root");
        assert_eq!(t.char_count, 3);
    }

    #[test]
    fn tree_validation_cases() {
        assert!(validate_tree(&Sentence::from_heads(&[2, 0]).tokens).is_valid());

        let cyc = validate_tree(&Sentence::from_heads(&[2, 1]).tokens);
        assert!(cyc
            .violations
            .contains(&Violation::Cycle { tokens: vec![1, 2] }));

        let two_roots = validate_tree(&Sentence::from_heads(&[0, 0]).tokens);
        assert_eq!(two_roots.violations, vec![Violation::RootCount(2)]);

        let oob = validate_tree(&Sentence::from_heads(&[0, 7]).tokens);
        assert!(oob
            .violations
            .contains(&Violation::HeadOutOfRange { token: 2, head: 7 }));
    }

    #[test]
    fn drop_policy_keeps_positions() {
        let docs = vec![Document {
            id: "d".into(),
            sentences: vec![Sentence::from_heads(&[2, 1]), Sentence::from_heads(&[0])],
        }];
        let v = validate_documents(docs.clone(), InvalidTreePolicy::Drop).unwrap();
        assert!(v[0].sentences[0].is_none());
        assert!(v[0].sentences[1].is_some());
        assert!(matches!(
            validate_documents(docs, InvalidTreePolicy::Abort),
            Err(Error::InvalidTree { sent_index: 1, .. })
        ));
    }
}
