//! Reply parsing. Parsers never fail: every raw text maps to a status.

use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::prompts::AnswerSchema;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParseStatus {
    Ok,
    Refusal,
    Malformed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Identification {
    pub ticker: String,
    pub industry: String,
    pub quarter: u32,
    pub year: i32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelReply {
    pub raw_text: String,
    pub answer_numeric: Option<f64>,
    pub answer_text: Option<String>,
    pub confidence: Option<f64>,
    pub refusal: bool,
    pub parse_status: ParseStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub identification: Option<Identification>,
    /// True when the reply came from the single re-ask after a malformed answer.
    #[serde(default)]
    pub reasked: bool,
    /// Why the reply was synthesized rather than received, e.g. a replay cache miss.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl ModelReply {
    fn empty(raw: &str, status: ParseStatus) -> Self {
        ModelReply {
            raw_text: raw.to_string(),
            answer_numeric: None,
            answer_text: None,
            confidence: None,
            refusal: status != ParseStatus::Ok,
            parse_status: status,
            identification: None,
            reasked: false,
            note: None,
        }
    }

    /// Refusal placeholder used when replay finds no cached reply.
    pub fn missing(note: impl Into<String>) -> Self {
        let mut r = ModelReply::empty("", ParseStatus::Refusal);
        r.note = Some(note.into());
        r
    }

    /// Applies the series-level rule that an answer of exactly 0 is a refusal.
    pub fn with_zero_rule(mut self, zero_implausible: bool) -> Self {
        if zero_implausible && self.answer_numeric == Some(0.0) && !self.refusal {
            self.refusal = true;
            self.parse_status = ParseStatus::Refusal;
        }
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NumericParse {
    pub answer_numeric: Option<f64>,
    pub confidence: Option<f64>,
    pub refusal: bool,
    pub parse_status: ParseStatus,
}

/// First JSON object embedded in `raw`, skipping prose and code fences.
pub fn extract_json_object(raw: &str) -> Option<Map<String, Value>> {
    raw.match_indices('{').find_map(|(i, _)| {
        let mut stream = serde_json::Deserializer::from_str(&raw[i..]).into_iter::<Value>();
        match stream.next() {
            Some(Ok(Value::Object(map))) => Some(map),
            _ => None,
        }
    })
}

enum Field<T> {
    Present(T),
    Null,
    Invalid,
}

fn numeric_field(v: Option<&Value>) -> Field<f64> {
    match v {
        None | Some(Value::Null) => Field::Null,
        Some(Value::Number(n)) => n.as_f64().filter(|x| x.is_finite()).map_or(Field::Invalid, Field::Present),
        Some(Value::String(s)) => {
            let cleaned: String = s
                .trim()
                .trim_end_matches('%')
                .chars()
                .filter(|c| *c != ',' && *c != '$')
                .collect();
            if cleaned.is_empty() || cleaned.eq_ignore_ascii_case("null") {
                return Field::Null;
            }
            cleaned
                .trim()
                .parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .map_or(Field::Invalid, Field::Present)
        }
        Some(_) => Field::Invalid,
    }
}

fn text_field(v: Option<&Value>) -> Field<String> {
    match v {
        None | Some(Value::Null) => Field::Null,
        Some(Value::String(s)) if s.trim().is_empty() || s.trim().eq_ignore_ascii_case("null") => Field::Null,
        Some(Value::String(s)) => Field::Present(s.trim().to_string()),
        Some(Value::Number(n)) => Field::Present(n.to_string()),
        Some(_) => Field::Invalid,
    }
}

fn confidence_field(obj: &Map<String, Value>) -> Option<f64> {
    match numeric_field(obj.get("confidence")) {
        Field::Present(c) if (0.0..=100.0).contains(&c) => Some(c),
        _ => None,
    }
}

pub fn parse_numeric_reply(raw: &str) -> NumericParse {
    let Some(obj) = extract_json_object(raw) else {
        return NumericParse {
            answer_numeric: None,
            confidence: None,
            refusal: true,
            parse_status: ParseStatus::Malformed,
        };
    };
    let confidence = confidence_field(&obj);
    let (answer_numeric, parse_status) = match numeric_field(obj.get("answer")) {
        Field::Present(v) => (Some(v), ParseStatus::Ok),
        Field::Null => (None, ParseStatus::Refusal),
        Field::Invalid => (None, ParseStatus::Malformed),
    };
    NumericParse {
        answer_numeric,
        confidence,
        refusal: parse_status != ParseStatus::Ok,
        parse_status,
    }
}

fn identification_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(
            r"(?i)company\s+estimate\s*:\s*([A-Za-z0-9.\-]+)\s*[,;]?\s*industry\s+estimate\s*:\s*([^\n]+?)\s*[,;]?\s*quarter\s+estimate\s*:\s*q?\s*([1-4])\s*[,;]?\s*year\s+estimate\s*:\s*(\d{4})",
        )
        .expect("valid regex")
    })
}

pub fn parse_identification_reply(raw: &str) -> (Option<Identification>, ParseStatus) {
    let Some(c) = identification_regex().captures(raw) else {
        return (None, ParseStatus::Malformed);
    };
    let industry = c[2].trim().trim_end_matches([',', ';']).trim().to_string();
    let ident = Identification {
        ticker: c[1].to_ascii_uppercase(),
        industry,
        quarter: c[3].parse().expect("regex digit"),
        year: c[4].parse().expect("regex digits"),
    };
    (Some(ident), ParseStatus::Ok)
}

/// Parses `raw` according to the answer schema of the prompt that produced it.
pub fn parse_reply(raw: &str, schema: AnswerSchema) -> ModelReply {
    match schema {
        AnswerSchema::NumericJson => {
            let p = parse_numeric_reply(raw);
            let mut r = ModelReply::empty(raw, p.parse_status);
            r.answer_numeric = p.answer_numeric;
            r.confidence = p.confidence;
            r
        }
        AnswerSchema::DirectionJson | AnswerSchema::DateJson | AnswerSchema::DateAndLevelJson => {
            let Some(obj) = extract_json_object(raw) else {
                return ModelReply::empty(raw, ParseStatus::Malformed);
            };
            let text_key = if schema == AnswerSchema::DateAndLevelJson { "date" } else { "answer" };
            let (text, mut status) = match text_field(obj.get(text_key)) {
                Field::Present(t) => (Some(t), ParseStatus::Ok),
                Field::Null => (None, ParseStatus::Refusal),
                Field::Invalid => (None, ParseStatus::Malformed),
            };
            let mut numeric = None;
            if schema == AnswerSchema::DateAndLevelJson {
                match numeric_field(obj.get("answer")) {
                    Field::Present(v) => numeric = Some(v),
                    Field::Null => {}
                    Field::Invalid if status == ParseStatus::Ok => status = ParseStatus::Malformed,
                    Field::Invalid => {}
                }
            }
            let mut r = ModelReply::empty(raw, status);
            if status == ParseStatus::Ok {
                r.answer_text = text;
                r.answer_numeric = numeric;
            }
            r.confidence = confidence_field(&obj);
            r
        }
        AnswerSchema::IdentificationLine => {
            let (ident, status) = parse_identification_reply(raw);
            let mut r = ModelReply::empty(raw, status);
            r.answer_text = ident.as_ref().map(|i| i.ticker.clone());
            r.identification = ident;
            r
        }
        AnswerSchema::FreeText => {
            let text = raw.trim();
            if text.is_empty() {
                ModelReply::empty(raw, ParseStatus::Refusal)
            } else {
                let mut r = ModelReply::empty(raw, ParseStatus::Ok);
                r.answer_text = Some(text.to_string());
                r
            }
        }
    }
}
