//! Readers that normalize dataset-native files into [`PromptRecord`]s.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::str::FromStr;

use serde::Deserialize;

use super::{Dataset, PromptRecord, Result, TraceError};

/// Instruction used as the question line for summarization items.
pub const XSUM_INSTRUCTION: &str = "Summarize the article in one sentence.";

/// Input layout of a prompt corpus file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum)]
pub enum Adapter {
    /// One `PromptRecord` JSON object per line.
    #[default]
    Jsonl,
    /// SQuAD v2.0 JSON (`data[].paragraphs[].qas[]`).
    SquadV2,
    /// TriviaQA no-context JSON (`Data[]` with `Question` and `Answer.Value`).
    Triviaqa,
    /// XSum JSON lines with `id`, `document` and `summary`.
    Xsum,
}

impl FromStr for Adapter {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        <Self as clap::ValueEnum>::from_str(s, true)
    }
}

pub fn read_prompts(path: &Path, adapter: Adapter) -> Result<Vec<PromptRecord>> {
    let records = match adapter {
        Adapter::Jsonl => read_jsonl(path)?,
        Adapter::SquadV2 => squad_v2(path)?,
        Adapter::Triviaqa => triviaqa(path)?,
        Adapter::Xsum => xsum(path)?,
    };
    let name = path.display().to_string();
    let mut seen = HashSet::new();
    for r in &records {
        r.validate().map_err(|e| TraceError::Malformed {
            path: name.clone(),
            line: 0,
            message: e.to_string(),
        })?;
        if !seen.insert(r.id.as_str()) {
            return Err(TraceError::DuplicateId {
                path: name,
                id: r.id.clone(),
            });
        }
    }
    Ok(records)
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|source| TraceError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn read_json_lines<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let name = path.display().to_string();
    let mut out = Vec::new();
    for (idx, line) in BufReader::new(open(path)?).lines().enumerate() {
        let line = line.map_err(|source| TraceError::Io {
            path: name.clone(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| TraceError::Malformed {
            path: name.clone(),
            line: idx + 1,
            message: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}

fn read_json_document<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    serde_json::from_reader(BufReader::new(open(path)?)).map_err(|e| TraceError::Malformed {
        path: path.display().to_string(),
        line: e.line(),
        message: e.to_string(),
    })
}

fn read_jsonl(path: &Path) -> Result<Vec<PromptRecord>> {
    read_json_lines(path)
}

#[derive(Deserialize)]
struct SquadFile {
    data: Vec<SquadArticle>,
}

#[derive(Deserialize)]
struct SquadArticle {
    paragraphs: Vec<SquadParagraph>,
}

#[derive(Deserialize)]
struct SquadParagraph {
    context: String,
    qas: Vec<SquadQa>,
}

#[derive(Deserialize)]
struct SquadQa {
    id: String,
    question: String,
    #[serde(default)]
    is_impossible: bool,
    #[serde(default)]
    answers: Vec<SquadAnswer>,
}

#[derive(Deserialize)]
struct SquadAnswer {
    text: String,
}

fn squad_v2(path: &Path) -> Result<Vec<PromptRecord>> {
    let file: SquadFile = read_json_document(path)?;
    let mut out = Vec::new();
    for article in file.data {
        for para in article.paragraphs {
            for qa in para.qas {
                // Unanswerable items keep an empty gold answer even when the
                // source lists plausible answers.
                let gold = if qa.is_impossible {
                    String::new()
                } else {
                    qa.answers
                        .into_iter()
                        .next()
                        .map(|a| a.text)
                        .unwrap_or_default()
                };
                out.push(PromptRecord {
                    id: qa.id,
                    dataset: Dataset::SquadV2,
                    context: para.context.clone(),
                    question: qa.question,
                    gold_answer: Some(gold),
                });
            }
        }
    }
    Ok(out)
}

#[derive(Deserialize)]
struct TriviaFile {
    #[serde(rename = "Data")]
    data: Vec<TriviaItem>,
}

#[derive(Deserialize)]
struct TriviaItem {
    #[serde(rename = "QuestionId")]
    question_id: String,
    #[serde(rename = "Question")]
    question: String,
    #[serde(rename = "Answer")]
    answer: Option<TriviaAnswer>,
}

#[derive(Deserialize)]
struct TriviaAnswer {
    #[serde(rename = "Value")]
    value: String,
}

fn triviaqa(path: &Path) -> Result<Vec<PromptRecord>> {
    let file: TriviaFile = read_json_document(path)?;
    Ok(file
        .data
        .into_iter()
        .map(|item| PromptRecord {
            id: item.question_id,
            dataset: Dataset::TriviaqaNocontext,
            context: String::new(),
            question: item.question,
            gold_answer: item.answer.map(|a| a.value),
        })
        .collect())
}

#[derive(Deserialize)]
struct XsumItem {
    id: String,
    document: String,
    summary: Option<String>,
}

fn xsum(path: &Path) -> Result<Vec<PromptRecord>> {
    Ok(read_json_lines::<XsumItem>(path)?
        .into_iter()
        .map(|item| PromptRecord {
            id: item.id,
            dataset: Dataset::Xsum,
            context: item.document,
            question: XSUM_INSTRUCTION.to_string(),
            gold_answer: item.summary,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn fixture(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn jsonl_happy_path() {
        let f = fixture(concat!(
            r#"{"id":"q1","dataset":"custom","context":"c","question":"Who?"}"#,
            "\n",
            r#"{"id":"q2","dataset":"squad_v2","question":"What?","gold_answer":""}"#,
            "\n"
        ));
        let recs = read_prompts(f.path(), Adapter::Jsonl).unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[1].context, "");
        assert_eq!(recs[1].gold_answer.as_deref(), Some(""));
    }

    #[test]
    fn jsonl_duplicate_id() {
        let line = r#"{"id":"q1","dataset":"custom","question":"Who?"}"#;
        let f = fixture(&format!("{line}\n{line}\n"));
        let err = read_prompts(f.path(), Adapter::Jsonl).unwrap_err();
        assert!(matches!(&err, TraceError::DuplicateId { id, .. } if id == "q1"));
        assert!(err.to_string().contains("\"q1\""));
    }

    #[test]
    fn jsonl_malformed_line_number() {
        let f = fixture(concat!(
            r#"{"id":"q1","dataset":"custom","question":"Who?"}"#,
            "\n",
            "{not json\n"
        ));
        let err = read_prompts(f.path(), Adapter::Jsonl).unwrap_err();
        assert!(
            matches!(err, TraceError::Malformed { line: 2, .. }),
            "{err}"
        );
    }

    #[test]
    fn squad_unanswerable_has_empty_gold() {
        let f = fixture(
            r#"{"version":"v2.0","data":[{"title":"T","paragraphs":[{"context":"Some context.","qas":[
                {"id":"a1","question":"Answerable?","is_impossible":false,"answers":[{"text":"yes","answer_start":0}]},
                {"id":"u1","question":"Unanswerable?","is_impossible":true,"answers":[],"plausible_answers":[{"text":"maybe","answer_start":0}]}
            ]}]}]}"#,
        );
        let recs = read_prompts(f.path(), Adapter::SquadV2).unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[0].gold_answer.as_deref(), Some("yes"));
        assert_eq!(recs[1].id, "u1");
        assert_eq!(recs[1].gold_answer.as_deref(), Some(""));
        assert_eq!(recs[1].context, "Some context.");
        assert_eq!(recs[1].dataset, Dataset::SquadV2);
    }

    #[test]
    fn triviaqa_has_no_context() {
        let f = fixture(
            r#"{"Data":[{"QuestionId":"tc_1","Question":"Capital of France?","Answer":{"Value":"Paris","Aliases":["paris"]}}],"Version":1.0}"#,
        );
        let recs = read_prompts(f.path(), Adapter::Triviaqa).unwrap();
        assert_eq!(recs[0].context, "");
        assert_eq!(recs[0].gold_answer.as_deref(), Some("Paris"));
        assert_eq!(recs[0].dataset, Dataset::TriviaqaNocontext);
    }

    #[test]
    fn xsum_uses_fixed_instruction() {
        let f = fixture(concat!(
            r#"{"id":"x1","document":"A long article.","summary":"Short."}"#,
            "\n"
        ));
        let recs = read_prompts(f.path(), Adapter::Xsum).unwrap();
        assert_eq!(recs[0].question, XSUM_INSTRUCTION);
        assert_eq!(recs[0].context, "A long article.");
        assert_eq!(recs[0].gold_answer.as_deref(), Some("Short."));
    }

    #[test]
    fn adapter_names_parse() {
        assert_eq!("squad-v2".parse::<Adapter>().unwrap(), Adapter::SquadV2);
        assert_eq!("xsum".parse::<Adapter>().unwrap(), Adapter::Xsum);
    }
}
