use serde::{Deserialize, Serialize};

use super::record::{Answers, CovidTest, Sex, SurveyRecord};
use super::DataError;

pub const SCHEMA_VERSION: u32 = 1;

/// Canonical CSV columns, in order.
pub const COLUMNS: [&str; 19] = [
    "sex",
    "contact_with_infected",
    "days_of_symptoms",
    "temp_gt_38",
    "max_temp",
    "cough",
    "dyspnoea",
    "muscle_aches",
    "loss_of_smell_taste",
    "sore_throat",
    "headache",
    "dizziness",
    "skin_reactions",
    "temperature",
    "saturation",
    "age",
    "symptomatic",
    "covid_test",
    "holdout_flag",
];

/// An ordered collection of survey records. Record identifiers are the
/// positional indices into `records`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cohort {
    pub schema_version: u32,
    pub records: Vec<SurveyRecord>,
    pub provenance: String,
}

impl Default for Cohort {
    fn default() -> Self {
        Cohort::new(Vec::new(), "")
    }
}

impl Cohort {
    pub fn new(records: Vec<SurveyRecord>, provenance: impl Into<String>) -> Self {
        Cohort {
            schema_version: SCHEMA_VERSION,
            records,
            provenance: provenance.into(),
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// A new cohort holding the records at `indices`, with the same metadata.
    pub fn subset(&self, indices: &[usize]) -> Cohort {
        Cohort {
            schema_version: self.schema_version,
            records: indices.iter().map(|&i| self.records[i].clone()).collect(),
            provenance: self.provenance.clone(),
        }
    }

    fn with_records(&self, records: Vec<SurveyRecord>) -> Cohort {
        Cohort {
            schema_version: self.schema_version,
            records,
            provenance: self.provenance.clone(),
        }
    }

    /// Labels of every record; fails on the first record without a test result.
    pub fn labels(&self) -> Result<Vec<bool>, DataError> {
        self.records
            .iter()
            .enumerate()
            .map(|(index, r)| r.label().ok_or(DataError::UnknownLabel { index }))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DroppedRow {
    /// 1-based data row number (the header is row 0).
    pub row: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedCohort {
    pub cohort: Cohort,
    pub dropped: Vec<DroppedRow>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubsetCounts {
    pub retained: usize,
    pub removed: usize,
}

const META_SCHEMA: &str = "# schema_version:";
const META_PROVENANCE: &str = "# provenance:";

/// Parses a cohort CSV document. Leading `#` lines may carry the schema
/// version and provenance written by [`serialize_cohort`].
///
/// In strict mode the first malformed or invariant-violating row is an
/// error; otherwise such rows are dropped and reported.
pub fn parse_cohort(text: &str, strict: bool) -> Result<ParsedCohort, DataError> {
    let mut schema_version = SCHEMA_VERSION;
    let mut provenance = String::new();
    let mut body_start = 0;
    for line in text.split_inclusive('\n') {
        let trimmed = line.trim_end_matches(['\r', '\n']);
        if !trimmed.starts_with('#') {
            break;
        }
        body_start += line.len();
        if let Some(v) = trimmed.strip_prefix(META_SCHEMA) {
            schema_version = v
                .trim()
                .parse()
                .map_err(|_| DataError::Schema(format!("bad schema_version `{}`", v.trim())))?;
        } else if let Some(v) = trimmed.strip_prefix(META_PROVENANCE) {
            provenance =
                serde_json::from_str(v.trim()).map_err(|e| DataError::Schema(format!("bad provenance line: {e}")))?;
        }
    }
    if schema_version != SCHEMA_VERSION {
        return Err(DataError::Schema(format!(
            "unsupported schema_version {schema_version}"
        )));
    }

    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(&text.as_bytes()[body_start..]);
    let header = reader.headers()?.clone();
    if header.iter().ne(COLUMNS.iter().copied()) {
        return Err(DataError::Schema(format!(
            "header must be `{}`, got `{}`",
            COLUMNS.join(","),
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }

    let mut records = Vec::new();
    let mut dropped = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row_no = i + 1;
        let row = row?;
        let parsed = parse_row(&row, row_no).and_then(|r| {
            r.answers
                .check_invariants()
                .map(|_| r)
                .map_err(|invariant| DataError::Invariant { row: row_no, invariant })
        });
        match parsed {
            Ok(r) => records.push(r),
            Err(e) if !strict => dropped.push(DroppedRow {
                row: row_no,
                reason: e.to_string(),
            }),
            Err(e) => return Err(e),
        }
    }

    Ok(ParsedCohort {
        cohort: Cohort {
            schema_version,
            records,
            provenance,
        },
        dropped,
    })
}

fn parse_row(row: &csv::StringRecord, row_no: usize) -> Result<SurveyRecord, DataError> {
    let field = |i: usize| row.get(i).unwrap_or("");
    let err = |i: usize, message: String| DataError::Row {
        row: row_no,
        column: COLUMNS[i].to_string(),
        message,
    };
    let tri = |i: usize| -> Result<Option<bool>, DataError> {
        match field(i) {
            "" => Ok(None),
            "1" => Ok(Some(true)),
            "0" => Ok(Some(false)),
            other => Err(err(i, format!("expected 1, 0 or empty, got `{other}`"))),
        }
    };
    let flag = |i: usize| -> Result<bool, DataError> {
        match field(i) {
            "1" => Ok(true),
            "0" => Ok(false),
            other => Err(err(i, format!("expected 1 or 0, got `{other}`"))),
        }
    };
    fn num<T: std::str::FromStr>(
        s: &str,
        i: usize,
        err: &dyn Fn(usize, String) -> DataError,
    ) -> Result<Option<T>, DataError> {
        if s.is_empty() {
            return Ok(None);
        }
        s.parse::<T>()
            .map(Some)
            .map_err(|_| err(i, format!("not a valid number: `{s}`")))
    }
    let real = |i: usize| -> Result<Option<f64>, DataError> {
        let v: Option<f64> = num(field(i), i, &err)?;
        match v {
            Some(x) if !x.is_finite() => Err(err(i, format!("not a finite number: `{x}`"))),
            v => Ok(v),
        }
    };

    let sex = match field(0) {
        "" => None,
        "F" => Some(Sex::F),
        "M" => Some(Sex::M),
        other => return Err(err(0, format!("expected F, M or empty, got `{other}`"))),
    };
    let saturation: Option<u32> = num(field(14), 14, &err)?;
    let saturation = saturation
        .map(|s| u8::try_from(s).map_err(|_| err(14, format!("out of range: {s}"))))
        .transpose()?;
    let covid_test = match field(17) {
        "positive" => CovidTest::Positive,
        "negative" => CovidTest::Negative,
        "unknown" => CovidTest::Unknown,
        other => {
            return Err(err(
                17,
                format!("expected positive, negative or unknown, got `{other}`"),
            ))
        }
    };

    Ok(SurveyRecord {
        answers: Answers {
            sex,
            contact_with_infected: tri(1)?,
            days_of_symptoms: num(field(2), 2, &err)?,
            temp_gt_38: tri(3)?,
            max_temp: real(4)?,
            cough: tri(5)?,
            dyspnoea: tri(6)?,
            muscle_aches: tri(7)?,
            loss_of_smell_taste: tri(8)?,
            sore_throat: tri(9)?,
            headache: tri(10)?,
            dizziness: tri(11)?,
            skin_reactions: tri(12)?,
            temperature: real(13)?,
            saturation,
            age: num(field(15), 15, &err)?,
        },
        symptomatic: flag(16)?,
        covid_test,
        holdout_flag: flag(18)?,
    })
}

fn fmt_opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn fmt_tri(v: Option<bool>) -> &'static str {
    match v {
        Some(true) => "1",
        Some(false) => "0",
        None => "",
    }
}

fn fmt_flag(v: bool) -> &'static str {
    if v {
        "1"
    } else {
        "0"
    }
}

/// One canonical CSV row (without a trailing newline) for a record.
pub fn record_fields(r: &SurveyRecord) -> [String; 19] {
    let a = &r.answers;
    [
        match a.sex {
            Some(Sex::F) => "F".into(),
            Some(Sex::M) => "M".into(),
            None => String::new(),
        },
        fmt_tri(a.contact_with_infected).into(),
        fmt_opt(a.days_of_symptoms),
        fmt_tri(a.temp_gt_38).into(),
        fmt_opt(a.max_temp),
        fmt_tri(a.cough).into(),
        fmt_tri(a.dyspnoea).into(),
        fmt_tri(a.muscle_aches).into(),
        fmt_tri(a.loss_of_smell_taste).into(),
        fmt_tri(a.sore_throat).into(),
        fmt_tri(a.headache).into(),
        fmt_tri(a.dizziness).into(),
        fmt_tri(a.skin_reactions).into(),
        fmt_opt(a.temperature),
        fmt_opt(a.saturation),
        fmt_opt(a.age),
        fmt_flag(r.symptomatic).into(),
        r.covid_test.as_str().into(),
        fmt_flag(r.holdout_flag).into(),
    ]
}

/// Serializes a cohort as canonical CSV, preceded by metadata comment lines.
pub fn serialize_cohort(c: &Cohort) -> String {
    let mut out = String::new();
    out.push_str(&format!("{META_SCHEMA} {}\n", c.schema_version));
    out.push_str(&format!(
        "{META_PROVENANCE} {}\n",
        serde_json::to_string(&c.provenance).expect("string serializes")
    ));
    let mut writer = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    writer.write_record(COLUMNS).expect("in-memory write");
    for r in &c.records {
        writer.write_record(record_fields(r)).expect("in-memory write");
    }
    let bytes = writer.into_inner().expect("in-memory flush");
    out.push_str(std::str::from_utf8(&bytes).expect("fields are utf-8"));
    out
}

/// Keeps only records of patients reporting illness.
pub fn filter_symptomatic(c: &Cohort) -> (Cohort, SubsetCounts) {
    let records: Vec<_> = c.records.iter().filter(|r| r.symptomatic).cloned().collect();
    let counts = SubsetCounts {
        retained: records.len(),
        removed: c.len() - records.len(),
    };
    (c.with_records(records), counts)
}

/// Partitions a cohort into (train, test) by `holdout_flag`.
pub fn split_holdout(c: &Cohort) -> (Cohort, Cohort) {
    let (test, train): (Vec<_>, Vec<_>) = c.records.iter().cloned().partition(|r| r.holdout_flag);
    (c.with_records(train), c.with_records(test))
}
