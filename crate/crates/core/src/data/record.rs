use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// The sixteen questionnaire attributes retained for modelling, in canonical
/// column order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Feature {
    Sex,
    ContactWithInfected,
    DaysOfSymptoms,
    #[serde(rename = "temp_gt_38")]
    TempGt38,
    MaxTemp,
    Cough,
    Dyspnoea,
    MuscleAches,
    LossOfSmellTaste,
    SoreThroat,
    Headache,
    Dizziness,
    SkinReactions,
    Temperature,
    Saturation,
    Age,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ValueKind {
    Binary,
    Numeric,
}

impl Feature {
    pub const ALL: [Feature; 16] = [
        Feature::Sex,
        Feature::ContactWithInfected,
        Feature::DaysOfSymptoms,
        Feature::TempGt38,
        Feature::MaxTemp,
        Feature::Cough,
        Feature::Dyspnoea,
        Feature::MuscleAches,
        Feature::LossOfSmellTaste,
        Feature::SoreThroat,
        Feature::Headache,
        Feature::Dizziness,
        Feature::SkinReactions,
        Feature::Temperature,
        Feature::Saturation,
        Feature::Age,
    ];

    /// Tri-state symptom answers (everything a patient can tick as present).
    pub const SYMPTOMS: [Feature; 9] = [
        Feature::TempGt38,
        Feature::Cough,
        Feature::Dyspnoea,
        Feature::MuscleAches,
        Feature::LossOfSmellTaste,
        Feature::SoreThroat,
        Feature::Headache,
        Feature::Dizziness,
        Feature::SkinReactions,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Feature::Sex => "sex",
            Feature::ContactWithInfected => "contact_with_infected",
            Feature::DaysOfSymptoms => "days_of_symptoms",
            Feature::TempGt38 => "temp_gt_38",
            Feature::MaxTemp => "max_temp",
            Feature::Cough => "cough",
            Feature::Dyspnoea => "dyspnoea",
            Feature::MuscleAches => "muscle_aches",
            Feature::LossOfSmellTaste => "loss_of_smell_taste",
            Feature::SoreThroat => "sore_throat",
            Feature::Headache => "headache",
            Feature::Dizziness => "dizziness",
            Feature::SkinReactions => "skin_reactions",
            Feature::Temperature => "temperature",
            Feature::Saturation => "saturation",
            Feature::Age => "age",
        }
    }

    /// Human-readable label used in reports.
    pub fn label(self) -> &'static str {
        match self {
            Feature::Sex => "Sex",
            Feature::ContactWithInfected => "Contact with infected person",
            Feature::DaysOfSymptoms => "Days of symptoms",
            Feature::TempGt38 => "Temp. >38C",
            Feature::MaxTemp => "Maximal temperature",
            Feature::Cough => "Cough",
            Feature::Dyspnoea => "Dyspnoea",
            Feature::MuscleAches => "Muscle aches",
            Feature::LossOfSmellTaste => "Loss of smell or taste",
            Feature::SoreThroat => "Sore throat",
            Feature::Headache => "Headache",
            Feature::Dizziness => "Dizziness",
            Feature::SkinReactions => "Skin reactions",
            Feature::Temperature => "Temperature (hospital)",
            Feature::Saturation => "Saturation",
            Feature::Age => "Age",
        }
    }

    pub fn kind(self) -> ValueKind {
        match self {
            Feature::DaysOfSymptoms | Feature::MaxTemp | Feature::Temperature | Feature::Saturation | Feature::Age => {
                ValueKind::Numeric
            }
            _ => ValueKind::Binary,
        }
    }

    pub fn is_binary(self) -> bool {
        self.kind() == ValueKind::Binary
    }

    pub fn is_symptom(self) -> bool {
        Feature::SYMPTOMS.contains(&self)
    }

    /// Position in the canonical column list.
    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Feature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Feature {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Feature::ALL
            .iter()
            .copied()
            .find(|f| f.name() == s)
            .ok_or_else(|| format!("unknown feature `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sex {
    F,
    M,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CovidTest {
    Positive,
    Negative,
    #[default]
    Unknown,
}

impl CovidTest {
    pub fn label(self) -> Option<bool> {
        match self {
            CovidTest::Positive => Some(true),
            CovidTest::Negative => Some(false),
            CovidTest::Unknown => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            CovidTest::Positive => "positive",
            CovidTest::Negative => "negative",
            CovidTest::Unknown => "unknown",
        }
    }
}

impl From<bool> for CovidTest {
    fn from(positive: bool) -> Self {
        if positive {
            CovidTest::Positive
        } else {
            CovidTest::Negative
        }
    }
}

pub const TEMP_RANGE: (f64, f64) = (34.0, 43.0);
pub const SATURATION_RANGE: (u8, u8) = (50, 100);

/// Questionnaire answers for the sixteen model features. `None` is a missing
/// answer; tri-state fields are `Some(true)` for "yes", `Some(false)` for "no".
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Answers {
    pub sex: Option<Sex>,
    pub contact_with_infected: Option<bool>,
    pub days_of_symptoms: Option<u32>,
    pub temp_gt_38: Option<bool>,
    pub max_temp: Option<f64>,
    pub cough: Option<bool>,
    pub dyspnoea: Option<bool>,
    pub muscle_aches: Option<bool>,
    pub loss_of_smell_taste: Option<bool>,
    pub sore_throat: Option<bool>,
    pub headache: Option<bool>,
    pub dizziness: Option<bool>,
    pub skin_reactions: Option<bool>,
    pub temperature: Option<f64>,
    pub saturation: Option<u8>,
    pub age: Option<u32>,
}

impl Answers {
    pub fn tri_state(&self, feature: Feature) -> Option<Option<bool>> {
        let v = match feature {
            Feature::ContactWithInfected => self.contact_with_infected,
            Feature::TempGt38 => self.temp_gt_38,
            Feature::Cough => self.cough,
            Feature::Dyspnoea => self.dyspnoea,
            Feature::MuscleAches => self.muscle_aches,
            Feature::LossOfSmellTaste => self.loss_of_smell_taste,
            Feature::SoreThroat => self.sore_throat,
            Feature::Headache => self.headache,
            Feature::Dizziness => self.dizziness,
            Feature::SkinReactions => self.skin_reactions,
            _ => return None,
        };
        Some(v)
    }

    pub fn tri_state_mut(&mut self, feature: Feature) -> Option<&mut Option<bool>> {
        Some(match feature {
            Feature::ContactWithInfected => &mut self.contact_with_infected,
            Feature::TempGt38 => &mut self.temp_gt_38,
            Feature::Cough => &mut self.cough,
            Feature::Dyspnoea => &mut self.dyspnoea,
            Feature::MuscleAches => &mut self.muscle_aches,
            Feature::LossOfSmellTaste => &mut self.loss_of_smell_taste,
            Feature::SoreThroat => &mut self.sore_throat,
            Feature::Headache => &mut self.headache,
            Feature::Dizziness => &mut self.dizziness,
            Feature::SkinReactions => &mut self.skin_reactions,
            _ => return None,
        })
    }

    /// Raw value of a feature as a number, without any imputation. Binary
    /// answers map to 0/1 (`sex`: F = 0, M = 1).
    pub fn raw_value(&self, feature: Feature) -> Option<f64> {
        match feature {
            Feature::Sex => self.sex.map(|s| f64::from(u8::from(s == Sex::M))),
            Feature::DaysOfSymptoms => self.days_of_symptoms.map(f64::from),
            Feature::MaxTemp => self.max_temp,
            Feature::Temperature => self.temperature,
            Feature::Saturation => self.saturation.map(f64::from),
            Feature::Age => self.age.map(f64::from),
            tri => self.tri_state(tri).flatten().map(|b| f64::from(u8::from(b))),
        }
    }

    /// Feature value used by every model: a missing contact answer counts as
    /// "no", all other missing answers stay missing.
    pub fn value(&self, feature: Feature) -> Option<f64> {
        if feature == Feature::ContactWithInfected {
            return Some(f64::from(u8::from(self.contact_with_infected.unwrap_or(false))));
        }
        self.raw_value(feature)
    }

    pub fn is_missing(&self, feature: Feature) -> bool {
        self.raw_value(feature).is_none()
    }

    /// Clears a feature to missing.
    pub fn clear(&mut self, feature: Feature) {
        match feature {
            Feature::Sex => self.sex = None,
            Feature::DaysOfSymptoms => self.days_of_symptoms = None,
            Feature::MaxTemp => self.max_temp = None,
            Feature::Temperature => self.temperature = None,
            Feature::Saturation => self.saturation = None,
            Feature::Age => self.age = None,
            tri => {
                if let Some(slot) = self.tri_state_mut(tri) {
                    *slot = None;
                }
            }
        }
    }

    pub fn any_symptom(&self) -> bool {
        Feature::SYMPTOMS
            .iter()
            .any(|&f| self.tri_state(f).flatten() == Some(true))
    }

    /// Checks the record-level invariants, returning a description of the
    /// first violated one.
    pub fn check_invariants(&self) -> Result<(), String> {
        if let Some(days) = self.days_of_symptoms {
            if days < 1 && self.any_symptom() {
                return Err("days_of_symptoms must be at least 1 when any symptom is reported".into());
            }
        }
        for (name, temp) in [("max_temp", self.max_temp), ("temperature", self.temperature)] {
            if let Some(t) = temp {
                if !t.is_finite() || t < TEMP_RANGE.0 || t > TEMP_RANGE.1 {
                    return Err(format!(
                        "{name} must lie in [{}, {}] degrees Celsius, got {t}",
                        TEMP_RANGE.0, TEMP_RANGE.1
                    ));
                }
            }
        }
        if let Some(s) = self.saturation {
            if s < SATURATION_RANGE.0 || s > SATURATION_RANGE.1 {
                return Err(format!(
                    "saturation must lie in [{}, {}] percent, got {s}",
                    SATURATION_RANGE.0, SATURATION_RANGE.1
                ));
            }
        }
        Ok(())
    }
}

/// One patient questionnaire with its labels.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SurveyRecord {
    #[serde(flatten)]
    pub answers: Answers,
    pub symptomatic: bool,
    pub covid_test: CovidTest,
    pub holdout_flag: bool,
}

impl SurveyRecord {
    pub fn label(&self) -> Option<bool> {
        self.covid_test.label()
    }
}
