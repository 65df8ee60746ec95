//! Text checkpoint: a version line followed by sections, each introduced by
//! `@section <kind> <name> <line count>` so no content needs escaping.
//! Tensors are written one row per line after a `rows cols` shape header.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::seqio::Vocab;

use super::data::{FrozenEmbeddings, Vocabs};
use super::model::Model;
use super::{ModelConfig, NeuralError};

const MAGIC: &str = "drskit-checkpoint 1";

fn section(out: &mut String, kind: &str, name: &str, body: &str) {
    writeln!(out, "@section {kind} {name} {}", body.lines().count()).unwrap();
    out.push_str(body);
    if !body.is_empty() && !body.ends_with('\n') {
        out.push('\n');
    }
}

pub fn to_text(model: &Model) -> String {
    let mut out = format!("{MAGIC}\n");
    section(&mut out, "config", "-", &model.config.to_text());
    let v = &model.vocabs;
    section(&mut out, "vocab", "target", &v.target.to_text());
    section(&mut out, "vocab", "word", &v.word.to_text());
    section(&mut out, "vocab", "chars", &v.chars.to_text());
    for (name, vocab) in &v.tags {
        section(&mut out, "vocab", &format!("tag:{name}"), &vocab.to_text());
    }
    if let Some(f) = &model.frozen {
        section(&mut out, "frozen", "-", &f.to_text());
    }
    for (id, slot) in model.layout.slots.iter().enumerate() {
        let mut body = format!("{} {}\n", slot.rows, slot.cols);
        let view = model.params.view(&model.layout, id);
        for row in view.rows() {
            let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            body.push_str(&cells.join(" "));
            body.push('\n');
        }
        section(&mut out, "tensor", &slot.name, &body);
    }
    out
}

fn corrupt(reason: impl Into<String>) -> NeuralError {
    NeuralError::Checkpoint(reason.into())
}

pub fn from_text(text: &str) -> Result<Model, NeuralError> {
    let mut lines = text.lines();
    if lines.next() != Some(MAGIC) {
        return Err(corrupt("missing or unsupported version line"));
    }
    let mut sections: Vec<(String, String, Vec<&str>)> = Vec::new();
    while let Some(head) = lines.next() {
        let parts: Vec<&str> = head.split(' ').collect();
        let [tag, kind, name, count] = parts[..] else {
            return Err(corrupt(format!("bad section header {head:?}")));
        };
        if tag != "@section" {
            return Err(corrupt(format!("bad section header {head:?}")));
        }
        let n: usize = count.parse().map_err(|_| corrupt("bad line count"))?;
        let body: Vec<&str> = lines.by_ref().take(n).collect();
        if body.len() != n {
            return Err(corrupt(format!("section {name} is truncated")));
        }
        sections.push((kind.to_string(), name.to_string(), body));
    }
    let find = |kind: &str, name: &str| {
        sections
            .iter()
            .find(|(k, n, _)| k == kind && n == name)
            .map(|(_, _, b)| b.join("\n"))
    };
    let config = ModelConfig::from_text(&find("config", "-").ok_or_else(|| corrupt("no config"))?)?;
    let vocab = |name: &str| -> Result<Vocab, NeuralError> {
        Ok(Vocab::from_text(
            &find("vocab", name).ok_or_else(|| corrupt(format!("no {name} vocabulary")))?,
        )?)
    };
    let mut tags = BTreeMap::new();
    for t in config.tag_channels() {
        tags.insert(t.clone(), vocab(&format!("tag:{t}"))?);
    }
    let vocabs = Vocabs {
        target: vocab("target")?,
        word: vocab("word")?,
        chars: vocab("chars")?,
        tags,
    };
    let frozen = find("frozen", "-").map(|t| FrozenEmbeddings::parse(&t)).transpose()?;
    let mut model = Model::new(config, vocabs, frozen)?;
    let mut seen = 0;
    for (kind, name, body) in &sections {
        if kind != "tensor" {
            continue;
        }
        let id = model
            .layout
            .find(name)
            .ok_or_else(|| corrupt(format!("unknown tensor {name}")))?;
        let (rows, cols) = (model.layout.slots[id].rows, model.layout.slots[id].cols);
        if body.first().copied() != Some(format!("{rows} {cols}").as_str()) {
            return Err(corrupt(format!("tensor {name} does not have shape {rows} x {cols}")));
        }
        let values: Vec<f64> = body[1..]
            .iter()
            .flat_map(|l| l.split(' ').filter(|s| !s.is_empty()))
            .map(|v| {
                v.parse::<f64>()
                    .map_err(|_| corrupt(format!("tensor {name}: bad number {v:?}")))
            })
            .collect::<Result<_, _>>()?;
        if values.len() != rows * cols {
            return Err(corrupt(format!("tensor {name}: expected {} values", rows * cols)));
        }
        model.params.data[model.layout.slots[id].range()].copy_from_slice(&values);
        seen += 1;
    }
    if seen != model.layout.slots.len() {
        return Err(corrupt("missing tensors"));
    }
    Ok(model)
}

pub fn save(model: &Model, path: &Path) -> Result<(), NeuralError> {
    std::fs::write(path, to_text(model))?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Model, NeuralError> {
    from_text(&std::fs::read_to_string(path)?)
}
