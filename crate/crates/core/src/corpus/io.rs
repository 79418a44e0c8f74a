//! Line-delimited JSON corpus files.
//!
//! Each non-blank line is one turn:
//!
//! ```text
//! {"session":"s001","turn":0,"speaker":"tourist","transcript":"where is it ?","intents":["QST_WHERE"]}
//! ```
//!
//! `speaker` is `tourist` or `guide`; `turn` must strictly increase within a
//! session; `intents` may be empty. Turns of one session need not be
//! contiguous in the file, sessions keep their order of first appearance.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{Dialogue, Role, Turn};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TurnRecord {
    pub session: String,
    pub turn: usize,
    pub speaker: String,
    pub transcript: String,
    pub intents: Vec<String>,
}

pub fn parse_corpus(text: &str) -> Result<Vec<Dialogue>> {
    let mut dialogues: Vec<Dialogue> = Vec::new();
    let mut last_turn: Vec<usize> = Vec::new();
    let mut by_id: HashMap<String, usize> = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let rec: TurnRecord = serde_json::from_str(line).map_err(|e| Error::Format {
            line: line_no,
            message: e.to_string(),
        })?;
        let speaker: Role = rec.speaker.parse().map_err(|message| Error::Validation {
            line: line_no,
            message,
        })?;
        if rec.intents.iter().any(|l| l.trim().is_empty()) {
            return Err(Error::Validation {
                line: line_no,
                message: "empty intent label".into(),
            });
        }
        let slot = match by_id.get(&rec.session) {
            Some(&slot) => {
                if rec.turn <= last_turn[slot] {
                    return Err(Error::Validation {
                        line: line_no,
                        message: format!(
                            "turn {} of session `{}` does not follow turn {}",
                            rec.turn, rec.session, last_turn[slot]
                        ),
                    });
                }
                slot
            }
            None => {
                by_id.insert(rec.session.clone(), dialogues.len());
                dialogues.push(Dialogue {
                    session_id: rec.session.clone(),
                    turns: Vec::new(),
                });
                last_turn.push(0);
                dialogues.len() - 1
            }
        };
        last_turn[slot] = rec.turn;
        dialogues[slot]
            .turns
            .push(Turn::new(speaker, rec.transcript, rec.intents));
    }
    Ok(dialogues)
}

pub fn load_corpus(path: impl AsRef<Path>) -> Result<Vec<Dialogue>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_corpus(&text)
}

pub fn records(dialogues: &[Dialogue]) -> impl Iterator<Item = TurnRecord> + '_ {
    dialogues.iter().flat_map(|d| {
        d.turns.iter().enumerate().map(move |(i, t)| TurnRecord {
            session: d.session_id.clone(),
            turn: i,
            speaker: t.speaker.as_str().to_string(),
            transcript: t.transcript.clone(),
            intents: t.intents.iter().cloned().collect(),
        })
    })
}

pub fn write_corpus(mut out: impl Write, dialogues: &[Dialogue]) -> Result<()> {
    for rec in records(dialogues) {
        serde_json::to_writer(&mut out, &rec)?;
        out.write_all(b"\n").map_err(|e| Error::io("<corpus>", e))?;
    }
    Ok(())
}

pub fn save_corpus(path: impl AsRef<Path>, dialogues: &[Dialogue]) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    write_corpus(&mut buf, dialogues)?;
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}
