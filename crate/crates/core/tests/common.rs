#![allow(dead_code)]

use ratattn_core::corpus::{Document, Label};
use ratattn_core::models::Architecture;

pub fn tiny_arch() -> Architecture {
    Architecture {
        embed_dim: 4,
        attention_dim: 4,
        widths: vec![2, 3],
        feature_maps: 3,
        max_sentence_len: 60,
        init_scale: 0.5,
    }
}

pub fn small_arch() -> Architecture {
    Architecture {
        embed_dim: 16,
        attention_dim: 16,
        widths: vec![2, 3],
        feature_maps: 12,
        max_sentence_len: 60,
        init_scale: 0.05,
    }
}

pub fn doc(id: &str, label: Label, sentences: &[(&str, Option<bool>)]) -> Document {
    Document::new(
        id,
        label,
        sentences.iter().map(|(t, r)| (t.to_string(), *r)),
    )
    .unwrap()
}

pub fn two_sentence_fixture() -> Document {
    doc(
        "fixture",
        Label::Pos,
        &[
            ("a truly great and moving film", Some(true)),
            ("the plot follows two brothers in a small town", Some(false)),
        ],
    )
}
