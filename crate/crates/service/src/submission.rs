//! Questionnaire submissions and their server-side validation.

use decode_core::data::{Answers, Feature, SATURATION_RANGE, TEMP_RANGE};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

pub const BLOOD_TYPES: [&str; 8] = ["0+", "0-", "A+", "A-", "B+", "B-", "AB+", "AB-"];
const MAX_TEXT: usize = 2000;
const MAX_AGE: u32 = 120;

/// Questionnaire as posted by a patient. Model fields use the canonical CSV
/// column names; the remaining fields are stored but unused by the models.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QuestionnaireSubmission {
    #[serde(flatten)]
    pub answers: Answers,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub other_symptoms: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub chronic_diseases: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub medications: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub blood_type: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub locale: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

impl FieldError {
    fn new(field: &str, message: impl Into<String>) -> Self {
        FieldError {
            field: field.into(),
            message: message.into(),
        }
    }
}

const EXTRA_FIELDS: [&str; 5] = [
    "other_symptoms",
    "chronic_diseases",
    "medications",
    "blood_type",
    "locale",
];

fn known_field(key: &str) -> bool {
    key.parse::<Feature>().is_ok() || EXTRA_FIELDS.contains(&key)
}

/// Decodes a JSON body, reporting every malformed or unknown field.
pub fn decode(body: &Value) -> Result<QuestionnaireSubmission, Vec<FieldError>> {
    let Some(obj) = body.as_object() else {
        return Err(vec![FieldError::new("", "body must be a JSON object")]);
    };
    let mut errors = Vec::new();
    for (key, value) in obj {
        if !known_field(key) {
            errors.push(FieldError::new(key, "unknown field"));
            continue;
        }
        // Decode each field on its own so type errors name the field.
        let single = Value::Object(Map::from_iter([(key.clone(), value.clone())]));
        if let Err(e) = serde_json::from_value::<QuestionnaireSubmission>(single) {
            errors.push(FieldError::new(key, type_message(&e)));
        }
    }
    if !errors.is_empty() {
        return Err(errors);
    }
    serde_json::from_value(body.clone()).map_err(|e| vec![FieldError::new("", e.to_string())])
}

fn type_message(e: &serde_json::Error) -> String {
    let s = e.to_string();
    match s.find(" at line") {
        Some(i) => s[..i].to_string(),
        None => s,
    }
}

impl QuestionnaireSubmission {
    /// Hard validation rules; returns every violated rule.
    pub fn validate(&self) -> Result<(), Vec<FieldError>> {
        let a = &self.answers;
        let mut errors = Vec::new();
        if a.any_symptom() {
            match a.days_of_symptoms {
                None => errors.push(FieldError::new(
                    "days_of_symptoms",
                    "required when any symptom is reported",
                )),
                Some(0) => errors.push(FieldError::new(
                    "days_of_symptoms",
                    "must be greater than 0 when any symptom is reported",
                )),
                Some(_) => {}
            }
        }
        for (name, t) in [("max_temp", a.max_temp), ("temperature", a.temperature)] {
            if let Some(t) = t {
                if !(TEMP_RANGE.0..=TEMP_RANGE.1).contains(&t) {
                    errors.push(FieldError::new(
                        name,
                        format!("must lie in [{}, {}] degrees Celsius", TEMP_RANGE.0, TEMP_RANGE.1),
                    ));
                }
            }
        }
        if let Some(s) = a.saturation {
            if !(SATURATION_RANGE.0..=SATURATION_RANGE.1).contains(&s) {
                errors.push(FieldError::new(
                    "saturation",
                    format!("must lie in [{}, {}] percent", SATURATION_RANGE.0, SATURATION_RANGE.1),
                ));
            }
        }
        if a.age.is_some_and(|v| v > MAX_AGE) {
            errors.push(FieldError::new("age", format!("must be at most {MAX_AGE}")));
        }
        if let Some(b) = &self.blood_type {
            if !BLOOD_TYPES.contains(&b.as_str()) {
                errors.push(FieldError::new(
                    "blood_type",
                    format!("must be one of {}", BLOOD_TYPES.join(", ")),
                ));
            }
        }
        for (name, text) in [
            ("other_symptoms", &self.other_symptoms),
            ("chronic_diseases", &self.chronic_diseases),
            ("medications", &self.medications),
        ] {
            if text.as_ref().is_some_and(|t| t.chars().count() > MAX_TEXT) {
                errors.push(FieldError::new(name, format!("at most {MAX_TEXT} characters")));
            }
        }
        if let Some(l) = &self.locale {
            let ok = !l.is_empty() && l.len() <= 35 && l.chars().all(|c| c.is_ascii_alphanumeric() || c == '-');
            if !ok {
                errors.push(FieldError::new("locale", "must be a language tag such as `en`"));
            }
        }
        if errors.is_empty() {
            Ok(())
        } else {
            Err(errors)
        }
    }
}
