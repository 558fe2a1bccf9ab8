//! Lifetime records, validation, CSV ingestion and the threshold-exceedance transform.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Censoring code of a record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "i64")]
pub enum Event {
    /// Failure after `time1`.
    RightCensored,
    /// Failure at `time1 == time2`.
    Observed,
    /// Failure before `time2`.
    LeftCensored,
    /// Failure in `(time1, time2]`.
    Interval,
}

impl Event {
    pub fn code(self) -> u8 {
        match self {
            Event::RightCensored => 0,
            Event::Observed => 1,
            Event::LeftCensored => 2,
            Event::Interval => 3,
        }
    }
}

impl From<Event> for u8 {
    fn from(e: Event) -> u8 {
        e.code()
    }
}

impl TryFrom<i64> for Event {
    type Error = Error;

    fn try_from(code: i64) -> Result<Self> {
        match code {
            0 => Ok(Event::RightCensored),
            1 => Ok(Event::Observed),
            2 => Ok(Event::LeftCensored),
            3 => Ok(Event::Interval),
            other => Err(Error::Code(other)),
        }
    }
}

/// One observation: a censoring set, one or two truncation windows and a weight.
///
/// Absent bounds are stored as infinite sentinels so every formula downstream is total.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LifetimeRecord {
    pub time1: f64,
    pub time2: f64,
    pub event: Event,
    pub ltrunc1: f64,
    pub rtrunc1: f64,
    /// Second truncation window `(ltrunc2, rtrunc2)` for double interval truncation.
    pub window2: Option<(f64, f64)>,
    pub weight: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stratum: Option<String>,
}

impl LifetimeRecord {
    /// Exact failure at `t` without truncation.
    pub fn observed(t: f64) -> Self {
        LifetimeRecord {
            time1: t,
            time2: t,
            event: Event::Observed,
            ltrunc1: f64::NEG_INFINITY,
            rtrunc1: f64::INFINITY,
            window2: None,
            weight: 1.0,
            stratum: None,
        }
    }

    pub fn right_censored(t: f64) -> Self {
        LifetimeRecord {
            time1: t,
            time2: f64::INFINITY,
            event: Event::RightCensored,
            ..Self::observed(t)
        }
    }

    pub fn interval(lo: f64, hi: f64) -> Self {
        LifetimeRecord {
            time1: lo,
            time2: hi,
            event: Event::Interval,
            ..Self::observed(lo)
        }
    }

    pub fn with_truncation(mut self, lower: f64, upper: f64) -> Self {
        self.ltrunc1 = lower;
        self.rtrunc1 = upper;
        self
    }

    pub fn with_second_window(mut self, lower: f64, upper: f64) -> Self {
        self.window2 = Some((lower, upper));
        self
    }

    pub fn with_weight(mut self, w: f64) -> Self {
        self.weight = w;
        self
    }

    pub fn with_stratum(mut self, s: impl Into<String>) -> Self {
        self.stratum = Some(s.into());
        self
    }

    /// Upper limit of the outermost truncation window.
    pub fn rtrunc_max(&self) -> f64 {
        self.window2.map_or(self.rtrunc1, |(_, r)| r)
    }

    /// Lower limit on the failure time implied by censoring and truncation together.
    pub fn lower_support(&self) -> f64 {
        self.time1.max(self.ltrunc1)
    }

    pub fn is_truncated(&self) -> bool {
        self.ltrunc1 > 0.0 || self.rtrunc1.is_finite() || self.window2.is_some()
    }

    /// Re-check every record invariant.
    pub fn check(&self) -> Result<()> {
        let nan = [self.time1, self.time2, self.ltrunc1, self.rtrunc1, self.weight]
            .iter()
            .any(|v| v.is_nan());
        if nan {
            return Err(Error::InvalidArgument("NaN in record".into()));
        }
        if !(self.weight >= 0.0) || !self.weight.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "weight must be finite and nonnegative, got {}",
                self.weight
            )));
        }
        if self.time1 > self.time2 {
            return Err(Error::Bounds {
                time1: self.time1,
                time2: self.time2,
            });
        }
        if self.ltrunc1 > self.rtrunc1 {
            return Err(Error::Truncation(format!(
                "ltrunc {} exceeds rtrunc {}",
                self.ltrunc1, self.rtrunc1
            )));
        }
        if let Some((l2, r2)) = self.window2 {
            if !(self.rtrunc1 < l2 && l2 <= r2) {
                return Err(Error::Truncation(format!(
                    "second window ({l2}, {r2}) must lie strictly above the first ({}, {})",
                    self.ltrunc1, self.rtrunc1
                )));
            }
        }
        let in_windows = |t: f64| {
            (self.ltrunc1 <= t && t <= self.rtrunc1)
                || self.window2.is_some_and(|(l2, r2)| l2 <= t && t <= r2)
        };
        let upper = self.rtrunc_max();
        let ok = match self.event {
            Event::Observed => self.time1 == self.time2 && in_windows(self.time1),
            Event::Interval => self.ltrunc1 <= self.time1 && self.time2 <= upper,
            Event::RightCensored => {
                if upper.is_finite() {
                    return Err(Error::Truncation(
                        "right-censored records cannot be right truncated".into(),
                    ));
                }
                self.ltrunc1 <= self.time1
            }
            Event::LeftCensored => self.time2 <= upper && self.time2 >= self.ltrunc1,
        };
        if !ok {
            return Err(Error::Truncation(format!(
                "failure set [{}, {}] is not observable inside the truncation window [{}, {}]",
                self.time1, self.time2, self.ltrunc1, upper
            )));
        }
        Ok(())
    }
}

/// Raw field values before validation; `None` means the cell was absent or empty.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawRecord {
    pub time: Option<f64>,
    pub time2: Option<f64>,
    pub event: Option<i64>,
    pub ltrunc: Option<f64>,
    pub rtrunc: Option<f64>,
    pub ltrunc2: Option<f64>,
    pub rtrunc2: Option<f64>,
    pub weight: Option<f64>,
    pub stratum: Option<String>,
}

/// Build a validated record from raw fields, filling defaults.
///
/// Missing truncation bounds become `-inf`/`+inf`, missing weights become 1.
/// Without an explicit event code, `time == time2` (or no `time2`) is an observed
/// failure and `time < time2` is interval censored.
pub fn validate_record(raw: &RawRecord) -> Result<LifetimeRecord> {
    let time = raw
        .time
        .ok_or_else(|| Error::InvalidArgument("missing time".into()))?;
    let event = match raw.event {
        Some(code) => Some(Event::try_from(code)?),
        None => None,
    };
    let (time1, time2, event) = match event {
        None => {
            let t2 = raw.time2.unwrap_or(time);
            if time > t2 {
                return Err(Error::Bounds { time1: time, time2: t2 });
            }
            let ev = if time == t2 { Event::Observed } else { Event::Interval };
            (time, t2, ev)
        }
        Some(Event::Observed) => {
            let t2 = raw.time2.unwrap_or(time);
            if time > t2 {
                return Err(Error::Bounds { time1: time, time2: t2 });
            }
            if t2 != time {
                return Err(Error::InvalidArgument(format!(
                    "observed failure needs time == time2, got {time} and {t2}"
                )));
            }
            (time, time, Event::Observed)
        }
        Some(Event::RightCensored) => (time, f64::INFINITY, Event::RightCensored),
        Some(Event::LeftCensored) => {
            let upper = raw.time2.unwrap_or(time);
            (f64::NEG_INFINITY, upper, Event::LeftCensored)
        }
        Some(Event::Interval) => {
            let t2 = raw
                .time2
                .ok_or_else(|| Error::InvalidArgument("interval censoring needs time2".into()))?;
            if time > t2 {
                return Err(Error::Bounds { time1: time, time2: t2 });
            }
            let ev = if time == t2 { Event::Observed } else { Event::Interval };
            (time, t2, ev)
        }
    };
    let window2 = match (raw.ltrunc2, raw.rtrunc2) {
        (None, None) => None,
        (l, r) => Some((l.unwrap_or(f64::NEG_INFINITY), r.unwrap_or(f64::INFINITY))),
    };
    let rec = LifetimeRecord {
        time1,
        time2,
        event,
        ltrunc1: raw.ltrunc.unwrap_or(f64::NEG_INFINITY),
        rtrunc1: raw.rtrunc.unwrap_or(f64::INFINITY),
        window2,
        weight: raw.weight.unwrap_or(1.0),
        stratum: raw.stratum.clone(),
    };
    rec.check()?;
    Ok(rec)
}

/// A validated, nonempty collection of records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub records: Vec<LifetimeRecord>,
    pub unit: String,
    pub provenance: String,
    /// Threshold already subtracted from every time, in original units.
    pub offset: f64,
}

impl Dataset {
    /// Validate records, drop zero weights and reject empty results.
    pub fn new(records: Vec<LifetimeRecord>) -> Result<Self> {
        let mut kept = Vec::with_capacity(records.len());
        for r in records {
            r.check()?;
            if r.weight > 0.0 {
                kept.push(r);
            }
        }
        if kept.is_empty() || kept.iter().map(|r| r.weight).sum::<f64>() <= 0.0 {
            return Err(Error::EmptyDataset);
        }
        Ok(Dataset {
            records: kept,
            unit: String::new(),
            provenance: String::new(),
            offset: 0.0,
        })
    }

    pub fn with_unit(mut self, unit: impl Into<String>) -> Self {
        self.unit = unit.into();
        self
    }

    pub fn with_provenance(mut self, note: impl Into<String>) -> Self {
        self.provenance = note.into();
        self
    }

    /// Attach stratum labels, one per record.
    pub fn with_strata<S: AsRef<str>>(mut self, labels: &[S]) -> Result<Self> {
        if labels.len() != self.records.len() {
            return Err(Error::InvalidArgument(format!(
                "{} labels for {} records",
                labels.len(),
                self.records.len()
            )));
        }
        for (r, l) in self.records.iter_mut().zip(labels) {
            r.stratum = Some(l.as_ref().to_string());
        }
        Ok(self)
    }

    pub fn total_weight(&self) -> f64 {
        self.records.iter().map(|r| r.weight).sum()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Largest time known to be reached by some record.
    pub fn max_time(&self) -> f64 {
        self.records
            .iter()
            .map(|r| if r.time2.is_finite() { r.time2 } else { r.time1 })
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn has_truncation(&self) -> bool {
        self.records.iter().any(|r| r.is_truncated())
    }

    pub fn has_censoring(&self) -> bool {
        self.records.iter().any(|r| r.event != Event::Observed)
    }
}

/// Threshold for the peaks-over-threshold analysis, in original units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExceedanceConfig {
    pub thresh: f64,
}

impl ExceedanceConfig {
    pub fn new(thresh: f64) -> Self {
        ExceedanceConfig { thresh }
    }

    pub fn validate(&self, d: &Dataset) -> Result<()> {
        if !self.thresh.is_finite() || self.thresh < 0.0 {
            return Err(Error::Threshold(format!(
                "threshold must be finite and nonnegative, got {}",
                self.thresh
            )));
        }
        if self.thresh < d.offset {
            return Err(Error::Threshold(format!(
                "data are already exceedances above {}; cannot lower the threshold to {}",
                d.offset, self.thresh
            )));
        }
        let top = d.max_time() + d.offset;
        if self.thresh >= top {
            return Err(Error::Threshold(format!(
                "threshold {} is not below the largest time {}",
                self.thresh, top
            )));
        }
        Ok(())
    }
}

/// Keep the records above `cfg.thresh` and shift all times by the threshold.
///
/// Applying the transform twice with the same threshold is a no-op because the
/// dataset remembers the threshold already subtracted.
pub fn to_exceedances(d: &Dataset, cfg: &ExceedanceConfig) -> Result<Dataset> {
    cfg.validate(d)?;
    let u = cfg.thresh - d.offset;
    if u == 0.0 && d.records.iter().all(|r| r.ltrunc1 >= 0.0 && r.time1 >= 0.0) {
        return Ok(d.clone());
    }
    let shift_lower = |x: f64| (x - u).max(0.0);
    let mut out = Vec::with_capacity(d.records.len());
    for (i, r) in d.records.iter().enumerate() {
        if r.time2 <= u {
            continue;
        }
        match r.event {
            Event::Observed if r.time1 <= u => continue,
            // not known to exceed u
            Event::RightCensored if r.time1 < u => continue,
            Event::LeftCensored | Event::Interval
                if r.lower_support().max(0.0) < u && u < r.time2 =>
            {
                return Err(Error::AmbiguousExceedance {
                    index: i,
                    thresh: cfg.thresh,
                });
            }
            _ => {}
        }
        let mut windows = vec![(r.ltrunc1, r.rtrunc1)];
        if let Some(w2) = r.window2 {
            windows.push(w2);
        }
        let windows: Vec<(f64, f64)> = windows
            .into_iter()
            .filter(|&(_, hi)| hi > u)
            .map(|(lo, hi)| (shift_lower(lo), hi - u))
            .collect();
        if windows.is_empty() {
            continue;
        }
        let time1 = match r.event {
            Event::LeftCensored => f64::NEG_INFINITY,
            _ => shift_lower(r.time1),
        };
        let rec = LifetimeRecord {
            time1,
            time2: r.time2 - u,
            event: r.event,
            ltrunc1: windows[0].0,
            rtrunc1: windows[0].1,
            window2: windows.get(1).copied(),
            weight: r.weight,
            stratum: r.stratum.clone(),
        };
        rec.check()?;
        out.push(rec);
    }
    if out.is_empty() {
        return Err(Error::NoExceedances(cfg.thresh));
    }
    let mut ds = Dataset::new(out)?;
    ds.unit = d.unit.clone();
    ds.provenance = d.provenance.clone();
    ds.offset = cfg.thresh;
    Ok(ds)
}

/// Mapping from canonical field names to CSV column names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Schema {
    pub time: String,
    pub time2: String,
    pub event: String,
    pub ltrunc: String,
    pub rtrunc: String,
    pub ltrunc2: String,
    pub rtrunc2: String,
    pub weight: String,
    /// Optional column holding stratum labels.
    pub stratum: Option<String>,
}

impl Default for Schema {
    fn default() -> Self {
        Schema {
            time: "time".into(),
            time2: "time2".into(),
            event: "event".into(),
            ltrunc: "ltrunc".into(),
            rtrunc: "rtrunc".into(),
            ltrunc2: "ltrunc2".into(),
            rtrunc2: "rtrunc2".into(),
            weight: "weight".into(),
            stratum: None,
        }
    }
}

impl Schema {
    /// Override one canonical field, e.g. `("weight", "count")`.
    pub fn set(&mut self, field: &str, column: &str) -> Result<()> {
        let slot = match field {
            "time" => &mut self.time,
            "time2" => &mut self.time2,
            "event" => &mut self.event,
            "ltrunc" => &mut self.ltrunc,
            "rtrunc" => &mut self.rtrunc,
            "ltrunc2" => &mut self.ltrunc2,
            "rtrunc2" => &mut self.rtrunc2,
            "weight" => &mut self.weight,
            "stratum" => {
                self.stratum = Some(column.to_string());
                return Ok(());
            }
            other => {
                return Err(Error::InvalidArgument(format!(
                    "unknown schema field '{other}'"
                )))
            }
        };
        *slot = column.to_string();
        Ok(())
    }
}

/// Accepted column names per canonical field, in order of preference.
const ALIASES: [(&str, &[&str]); 8] = [
    ("time", &["time", "age", "t"]),
    ("time2", &["time2", "age2"]),
    ("event", &["event", "status", "delta"]),
    ("ltrunc", &["ltrunc", "entry"]),
    ("rtrunc", &["rtrunc"]),
    ("ltrunc2", &["ltrunc2"]),
    ("rtrunc2", &["rtrunc2"]),
    ("weight", &["weight", "count", "n"]),
];

impl Schema {
    /// Default schema with each field pointed at the first alias present in `header`.
    pub fn infer<S: AsRef<str>>(header: &[S]) -> Schema {
        let mut schema = Schema::default();
        for (field, names) in ALIASES {
            if let Some(name) = names.iter().find(|n| header.iter().any(|h| h.as_ref().trim() == **n)) {
                schema.set(field, name).expect("known field");
            }
        }
        schema
    }

    /// Infer the schema from the first line of CSV text.
    pub fn infer_from_csv(text: &str) -> Schema {
        let header: Vec<&str> = text.lines().next().unwrap_or("").split(',').collect();
        Schema::infer(&header)
    }
}

fn parse_cell(cell: &str) -> std::result::Result<Option<f64>, String> {
    let s = cell.trim();
    match s.to_ascii_lowercase().as_str() {
        "" | "na" | "nan" => Ok(None),
        "inf" | "+inf" | "infinity" => Ok(Some(f64::INFINITY)),
        "-inf" | "-infinity" => Ok(Some(f64::NEG_INFINITY)),
        _ => s
            .parse::<f64>()
            .map(Some)
            .map_err(|e| format!("cannot parse '{s}' as a number: {e}")),
    }
}

/// Load a dataset from CSV text. Row numbers in errors count data rows from 1.
pub fn load_csv_str(text: &str, schema: &Schema) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = rdr
        .headers()
        .map_err(|e| Error::Parse {
            row: 0,
            column: String::new(),
            message: e.to_string(),
        })?
        .clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let time_col = col(&schema.time).ok_or_else(|| Error::Parse {
        row: 0,
        column: schema.time.clone(),
        message: "time column missing from header".into(),
    })?;
    let numeric = [
        (&schema.time2, col(&schema.time2)),
        (&schema.ltrunc, col(&schema.ltrunc)),
        (&schema.rtrunc, col(&schema.rtrunc)),
        (&schema.ltrunc2, col(&schema.ltrunc2)),
        (&schema.rtrunc2, col(&schema.rtrunc2)),
        (&schema.weight, col(&schema.weight)),
    ];
    let event_col = col(&schema.event);
    let stratum_col = match &schema.stratum {
        Some(name) => Some(col(name).ok_or_else(|| Error::Parse {
            row: 0,
            column: name.clone(),
            message: "stratum column missing from header".into(),
        })?),
        None => None,
    };
    let mut records = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let rowno = i + 1;
        let row = row.map_err(|e| Error::Parse {
            row: rowno,
            column: String::new(),
            message: e.to_string(),
        })?;
        let get = |name: &String, idx: Option<usize>| -> Result<Option<f64>> {
            match idx.and_then(|k| row.get(k)) {
                None => Ok(None),
                Some(cell) => parse_cell(cell).map_err(|message| Error::Parse {
                    row: rowno,
                    column: name.clone(),
                    message,
                }),
            }
        };
        let time = get(&schema.time, Some(time_col))?;
        let vals: Vec<Option<f64>> = numeric
            .iter()
            .map(|(n, idx)| get(n, *idx))
            .collect::<Result<_>>()?;
        let event = match event_col.and_then(|k| row.get(k)).map(str::trim) {
            None | Some("") => None,
            Some(s) => Some(s.parse::<f64>().ok().filter(|v| v.fract() == 0.0).ok_or_else(
                || Error::Parse {
                    row: rowno,
                    column: schema.event.clone(),
                    message: format!("invalid event code '{s}'"),
                },
            )? as i64),
        };
        let raw = RawRecord {
            time,
            time2: vals[0],
            event,
            ltrunc: vals[1],
            rtrunc: vals[2],
            ltrunc2: vals[3],
            rtrunc2: vals[4],
            weight: vals[5],
            stratum: stratum_col.and_then(|k| row.get(k)).map(str::to_string),
        };
        let rec = validate_record(&raw).map_err(|e| Error::Parse {
            row: rowno,
            column: schema.time.clone(),
            message: e.to_string(),
        })?;
        if rec.weight > 0.0 {
            records.push(rec);
        }
    }
    Dataset::new(records)
}

pub fn load_csv(path: impl AsRef<Path>, schema: &Schema) -> Result<Dataset> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    Ok(load_csv_str(&text, schema)?.with_provenance(path.display().to_string()))
}

/// Female Japanese centenarian deaths by age band and birth cohort, with one
/// row per cell: `age,age2,event,rtrunc,count,cohort`.
pub const JAPANESE_FEMALE_CSV: &str = include_str!("../data/japanese_female.csv");

/// Load the bundled female Japanese table: interval censored on `[age, age + 1]`,
/// right truncated at `2020 - first year of the cohort`, weighted by counts.
pub fn japanese_female() -> Dataset {
    let mut schema = Schema::default();
    schema.time = "age".into();
    schema.time2 = "age2".into();
    schema.weight = "count".into();
    schema.stratum = Some("cohort".into());
    load_csv_str(JAPANESE_FEMALE_CSV, &schema)
        .expect("bundled table is valid")
        .with_unit("years")
        .with_provenance("female Japanese centenarians, deaths by birth cohort")
}
