//! Converter for the DSTC4 release layout, for users holding the licensed data.
//!
//! A session directory holds `log.json` (utterances with `utter_index`,
//! `speaker`, `transcript`) and `label.json` (per utterance `speech_act`, a
//! list of `{act, attributes}`). Each act/attribute pair becomes one label
//! `ACT_ATTRIBUTE`; an act without attributes becomes the bare act.

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use serde_json::Value;

use crate::corpus::{Dialogue, Turn};
use crate::error::{Error, Result};

fn field<'a>(v: &'a Value, key: &str, line: usize) -> Result<&'a Value> {
    v.get(key).ok_or_else(|| Error::Format {
        line,
        message: format!("missing `{key}`"),
    })
}

/// Labels of one `label.json` utterance entry.
pub fn labels_of(entry: &Value) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    let acts = entry.get("speech_act").and_then(Value::as_array);
    for act in acts.into_iter().flatten() {
        let Some(name) = act.get("act").and_then(Value::as_str) else { continue };
        let attrs: Vec<&str> = act
            .get("attributes")
            .and_then(Value::as_array)
            .map(|a| a.iter().filter_map(Value::as_str).collect())
            .unwrap_or_default();
        if attrs.is_empty() {
            out.insert(name.to_string());
        }
        for attr in attrs {
            out.insert(format!("{name}_{attr}"));
        }
    }
    out
}

pub fn convert_session(session_id: &str, log: &Value, label: &Value) -> Result<Dialogue> {
    let utterances = field(log, "utterances", 0)?
        .as_array()
        .ok_or_else(|| Error::Format { line: 0, message: "`utterances` is not a list".into() })?;
    let labels: HashMap<u64, BTreeSet<String>> = label
        .get("utterances")
        .and_then(Value::as_array)
        .into_iter()
        .flatten()
        .filter_map(|u| Some((u.get("utter_index")?.as_u64()?, labels_of(u))))
        .collect();
    let mut turns = Vec::with_capacity(utterances.len());
    for (i, u) in utterances.iter().enumerate() {
        let index = field(u, "utter_index", i)?.as_u64().unwrap_or(i as u64);
        let speaker = field(u, "speaker", i)?
            .as_str()
            .unwrap_or_default()
            .parse()
            .map_err(|message| Error::Validation { line: i, message })?;
        let transcript = field(u, "transcript", i)?.as_str().unwrap_or_default();
        let intents = labels.get(&index).cloned().unwrap_or_default();
        turns.push(Turn::new(speaker, transcript, intents));
    }
    Ok(Dialogue { session_id: session_id.to_string(), turns })
}

/// Converts every session directory under `root` that holds both files.
pub fn convert_tree(root: impl AsRef<Path>) -> Result<Vec<Dialogue>> {
    let root = root.as_ref();
    let mut dirs: Vec<_> = fs::read_dir(root)
        .map_err(|e| Error::io(root, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join("log.json").is_file() && p.join("label.json").is_file())
        .collect();
    dirs.sort();
    let read = |p: &Path| -> Result<Value> {
        let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
        Ok(serde_json::from_str(&text)?)
    };
    dirs.iter()
        .map(|dir| {
            let id = dir.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
            convert_session(&id, &read(&dir.join("log.json"))?, &read(&dir.join("label.json"))?)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Role;
    use serde_json::json;

    #[test]
    fn converts_acts_and_attributes() {
        let log = json!({"utterances": [
            {"utter_index": 0, "speaker": "Guide", "transcript": "Hi, how can I help?"},
            {"utter_index": 1, "speaker": "Tourist", "transcript": "Where's the zoo?"}
        ]});
        let label = json!({"utterances": [
            {"utter_index": 0, "speech_act": [{"act": "FOL", "attributes": []}]},
            {"utter_index": 1, "speech_act": [{"act": "QST", "attributes": ["WHERE", "WHAT"]}]}
        ]});
        let d = convert_session("001", &log, &label).unwrap();
        assert_eq!(d.turns[0].speaker, Role::Guide);
        assert_eq!(d.turns[0].intents.iter().collect::<Vec<_>>(), ["FOL"]);
        assert_eq!(d.turns[1].intents.iter().collect::<Vec<_>>(), ["QST_WHAT", "QST_WHERE"]);
    }
}
