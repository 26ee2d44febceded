//! Survival data: subject records, counting-process intervals, CSV ingestion
//! and risk-set construction.
//!
//! Both record layouts are normalized into *spans*: half-open intervals
//! `(start, stop]` carrying a covariate row and an event flag at `stop`. A
//! single-record subject contributes one span `(entry, exit]`; a
//! counting-process subject contributes one span per interval. A span belongs
//! to the risk set at time `t` iff `start < t <= stop`.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// One subject in single-record layout.
#[derive(Debug, Clone, PartialEq)]
pub struct SubjectRecord<T> {
    pub id: String,
    /// Delayed-entry time; zero when the subject is observed from the origin.
    pub entry: T,
    pub exit: T,
    pub event: bool,
    pub covariates: Vec<T>,
}

/// One interval of a subject in counting-process layout.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalRecord<T> {
    pub id: String,
    pub start: T,
    pub stop: T,
    pub event: bool,
    /// Covariates in force on `(start, stop]`.
    pub covariates: Vec<T>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Single,
    Counting,
}

impl std::str::FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "single" => Ok(Format::Single),
            "counting" => Ok(Format::Counting),
            other => Err(Error::Argument(format!("unknown data format `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Records<T> {
    Single(Vec<SubjectRecord<T>>),
    Counting(Vec<IntervalRecord<T>>),
}

/// Column name bindings used by [`SurvivalDataset::read_csv`].
///
/// When `covariates` is `None` every column not bound to a role is taken as a
/// covariate. When it is `Some`, any other column is rejected.
#[derive(Debug, Clone)]
pub struct ColumnMap {
    pub id: String,
    pub entry: String,
    pub time: String,
    pub event: String,
    pub start: String,
    pub stop: String,
    pub covariates: Option<Vec<String>>,
}

impl Default for ColumnMap {
    fn default() -> Self {
        Self {
            id: "id".into(),
            entry: "entry".into(),
            time: "time".into(),
            event: "event".into(),
            start: "start".into(),
            stop: "stop".into(),
            covariates: None,
        }
    }
}

/// Subject-level summary: first entry, last exit, terminal event.
#[derive(Debug, Clone, PartialEq)]
pub struct Subject<T> {
    pub id: String,
    pub entry: T,
    pub exit: T,
    pub event: bool,
    spans: Vec<usize>,
}

impl<T> Subject<T> {
    pub fn spans(&self) -> &[usize] {
        &self.spans
    }
}

/// Borrowed view of one span.
#[derive(Debug, Clone, Copy)]
pub struct Span<'a, T> {
    pub subject: usize,
    pub start: T,
    pub stop: T,
    pub event: bool,
    pub covariates: &'a [T],
}

/// Members of the risk set at one distinct event time, as span indices in
/// dataset order.
#[derive(Debug, Clone, PartialEq)]
pub struct RiskSet<T> {
    pub time: T,
    pub spans: Vec<usize>,
    /// Number of events at `time` (tie count).
    pub events: usize,
}

/// A risk-set member with the covariates valid at the risk-set time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiskMember<'a, T> {
    pub subject: usize,
    pub id: &'a str,
    pub covariates: &'a [T],
    pub event: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalDataset<T> {
    records: Records<T>,
    covariate_names: Vec<String>,
    subjects: Vec<Subject<T>>,
    span_owner: Vec<usize>,
}

impl<T: Scalar> SurvivalDataset<T> {
    pub fn from_subjects(records: Vec<SubjectRecord<T>>, covariate_names: Vec<String>) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::Validation("dataset has no records".into()));
        }
        let p = covariate_names.len();
        let mut subjects = Vec::with_capacity(records.len());
        for (i, r) in records.iter().enumerate() {
            let row = i + 1;
            check_time(row, "entry", r.entry, true)?;
            check_time(row, "time", r.exit, false)?;
            if !(r.entry < r.exit) {
                return Err(Error::row(row, format!("entry {} must be before exit {}", r.entry, r.exit)));
            }
            check_covariates(row, &r.covariates, &covariate_names)?;
            subjects.push(Subject {
                id: r.id.clone(),
                entry: r.entry,
                exit: r.exit,
                event: r.event,
                spans: vec![i],
            });
        }
        debug_assert!(records.iter().all(|r| r.covariates.len() == p));
        let span_owner = (0..records.len()).collect();
        Ok(Self { records: Records::Single(records), covariate_names, subjects, span_owner })
    }

    pub fn from_intervals(records: Vec<IntervalRecord<T>>, covariate_names: Vec<String>) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::Validation("dataset has no records".into()));
        }
        let mut index: HashMap<&str, usize> = HashMap::new();
        let mut subjects: Vec<Subject<T>> = Vec::new();
        let mut span_owner = Vec::with_capacity(records.len());
        for (i, r) in records.iter().enumerate() {
            let row = i + 1;
            check_time(row, "start", r.start, true)?;
            check_time(row, "stop", r.stop, false)?;
            if !(r.start < r.stop) {
                return Err(Error::row(row, format!("start {} must be before stop {}", r.start, r.stop)));
            }
            check_covariates(row, &r.covariates, &covariate_names)?;
            match index.get(r.id.as_str()) {
                None => {
                    index.insert(r.id.as_str(), subjects.len());
                    span_owner.push(subjects.len());
                    subjects.push(Subject {
                        id: r.id.clone(),
                        entry: r.start,
                        exit: r.stop,
                        event: r.event,
                        spans: vec![i],
                    });
                }
                Some(&s) => {
                    span_owner.push(s);
                    let subj = &mut subjects[s];
                    if subj.event {
                        return Err(Error::row(
                            row,
                            format!("subject `{}` has an interval after its event interval", r.id),
                        ));
                    }
                    if r.start < subj.exit {
                        return Err(Error::row(
                            row,
                            format!("interval ({}, {}] of subject `{}` overlaps or precedes an earlier interval", r.start, r.stop, r.id),
                        ));
                    }
                    subj.exit = r.stop;
                    subj.event = r.event;
                    subj.spans.push(i);
                }
            }
        }
        Ok(Self { records: Records::Counting(records), covariate_names, subjects, span_owner })
    }

    pub fn read_csv(path: impl AsRef<Path>, format: Format, columns: &ColumnMap) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv_from(file, format, columns).map_err(|e| match e {
            Error::Csv { source, .. } => Error::csv(path, source),
            other => other,
        })
    }

    pub fn read_csv_from<R: Read>(reader: R, format: Format, columns: &ColumnMap) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
        let headers: Vec<String> =
            rdr.headers().map_err(|e| Error::csv("<input>", e))?.iter().map(str::to_owned).collect();
        let find = |name: &str| headers.iter().position(|h| h == name);
        let require = |name: &str| find(name).ok_or_else(|| Error::MissingColumn(name.to_owned()));

        let (roles, mut bound): (Vec<usize>, Vec<usize>) = match format {
            Format::Single => {
                let time = require(&columns.time)?;
                let event = require(&columns.event)?;
                let mut bound = vec![time, event];
                bound.extend(find(&columns.id));
                bound.extend(find(&columns.entry));
                (vec![time, event], bound)
            }
            Format::Counting => {
                let id = require(&columns.id)?;
                let start = require(&columns.start)?;
                let stop = require(&columns.stop)?;
                let event = require(&columns.event)?;
                (vec![start, stop, event], vec![id, start, stop, event])
            }
        };
        let covariate_cols: Vec<usize> = match &columns.covariates {
            Some(names) => {
                let cols = names.iter().map(|n| require(n)).collect::<Result<Vec<_>>>()?;
                bound.extend(cols.iter().copied());
                if let Some(extra) = (0..headers.len()).find(|c| !bound.contains(c)) {
                    return Err(Error::UnknownColumn(headers[extra].clone()));
                }
                cols
            }
            None => (0..headers.len()).filter(|c| !bound.contains(c)).collect(),
        };
        let covariate_names: Vec<String> = covariate_cols.iter().map(|&c| headers[c].clone()).collect();
        let id_col = find(&columns.id);
        let entry_col = find(&columns.entry);

        let mut single = Vec::new();
        let mut counting = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let row = i + 1;
            let rec = rec.map_err(|e| Error::row(row, e.to_string()))?;
            let cell = |c: usize| rec.get(c).unwrap_or("");
            let covariates = covariate_cols
                .iter()
                .map(|&c| parse_real(row, &headers[c], cell(c)))
                .collect::<Result<Vec<T>>>()?;
            let id = match id_col {
                Some(c) if !cell(c).is_empty() => cell(c).to_owned(),
                Some(c) if format == Format::Counting => {
                    return Err(Error::row(row, format!("missing value in column `{}`", headers[c])))
                }
                _ => row.to_string(),
            };
            match format {
                Format::Single => {
                    let entry = match entry_col {
                        Some(c) => parse_real(row, &headers[c], cell(c))?,
                        None => T::zero(),
                    };
                    single.push(SubjectRecord {
                        id,
                        entry,
                        exit: parse_real(row, &headers[roles[0]], cell(roles[0]))?,
                        event: parse_event(row, cell(roles[1]))?,
                        covariates,
                    });
                }
                Format::Counting => counting.push(IntervalRecord {
                    id,
                    start: parse_real(row, &headers[roles[0]], cell(roles[0]))?,
                    stop: parse_real(row, &headers[roles[1]], cell(roles[1]))?,
                    event: parse_event(row, cell(roles[2]))?,
                    covariates,
                }),
            }
        }
        match format {
            Format::Single => Self::from_subjects(single, covariate_names),
            Format::Counting => Self::from_intervals(counting, covariate_names),
        }
    }

    /// Writes the dataset in the layout it was read from, always including the
    /// `id` (and, for single records, `entry`) columns.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv_to(file).map_err(|e| match e {
            Error::Csv { source, .. } => Error::csv(path, source),
            other => other,
        })
    }

    pub fn write_csv_to<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let wrap = |e| Error::csv("<output>", e);
        let flag = |e: bool| if e { "1" } else { "0" };
        match &self.records {
            Records::Single(rs) => {
                let mut header = vec!["id", "entry", "time", "event"];
                header.extend(self.covariate_names.iter().map(String::as_str));
                w.write_record(&header).map_err(wrap)?;
                for r in rs {
                    let mut row = vec![r.id.clone(), r.entry.to_string(), r.exit.to_string(), flag(r.event).into()];
                    row.extend(r.covariates.iter().map(T::to_string));
                    w.write_record(&row).map_err(wrap)?;
                }
            }
            Records::Counting(rs) => {
                let mut header = vec!["id", "start", "stop", "event"];
                header.extend(self.covariate_names.iter().map(String::as_str));
                w.write_record(&header).map_err(wrap)?;
                for r in rs {
                    let mut row = vec![r.id.clone(), r.start.to_string(), r.stop.to_string(), flag(r.event).into()];
                    row.extend(r.covariates.iter().map(T::to_string));
                    w.write_record(&row).map_err(wrap)?;
                }
            }
        }
        w.flush().map_err(|e| Error::io("<output>", e))
    }

    pub fn format(&self) -> Format {
        match self.records {
            Records::Single(_) => Format::Single,
            Records::Counting(_) => Format::Counting,
        }
    }

    pub fn records(&self) -> &Records<T> {
        &self.records
    }

    pub fn p(&self) -> usize {
        self.covariate_names.len()
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.covariate_names
    }

    pub fn subjects(&self) -> &[Subject<T>] {
        &self.subjects
    }

    pub fn n_subjects(&self) -> usize {
        self.subjects.len()
    }

    pub fn n_spans(&self) -> usize {
        match &self.records {
            Records::Single(r) => r.len(),
            Records::Counting(r) => r.len(),
        }
    }

    pub fn span(&self, i: usize) -> Span<'_, T> {
        match &self.records {
            Records::Single(r) => {
                let r = &r[i];
                Span { subject: i, start: r.entry, stop: r.exit, event: r.event, covariates: &r.covariates }
            }
            Records::Counting(r) => {
                let subject = self.span_owner[i];
                let r = &r[i];
                Span { subject, start: r.start, stop: r.stop, event: r.event, covariates: &r.covariates }
            }
        }
    }

    /// Total number of events (counting ties).
    pub fn n_events(&self) -> usize {
        self.subjects.iter().filter(|s| s.event).count()
    }

    /// Covariates of `subject` valid at time `t`: the interval with
    /// `start < t <= stop`, otherwise the most recent interval starting before
    /// `t`, otherwise the first interval.
    pub fn covariates_at(&self, subject: usize, t: T) -> &[T] {
        let spans = &self.subjects[subject].spans;
        let mut chosen = spans[0];
        for &s in spans {
            let sp = self.span(s);
            if sp.start < t {
                chosen = s;
            }
            if sp.start < t && t <= sp.stop {
                break;
            }
        }
        self.span(chosen).covariates
    }

    /// Baseline covariates (first interval) of each subject.
    pub fn baseline_covariates(&self, subject: usize) -> &[T] {
        self.span(self.subjects[subject].spans[0]).covariates
    }

    /// Strictly increasing distinct times at which at least one event occurs.
    pub fn event_times(&self) -> Vec<T> {
        let mut times: Vec<T> = self.subjects.iter().filter(|s| s.event).map(|s| s.exit).collect();
        times.sort_by(|a, b| a.partial_cmp(b).expect("times are finite"));
        times.dedup();
        times
    }

    /// Risk sets at every distinct event time, in ascending time order.
    pub fn risk_sets(&self) -> Vec<RiskSet<T>> {
        let times = self.event_times();
        let mut sets: Vec<RiskSet<T>> =
            times.iter().map(|&time| RiskSet { time, spans: Vec::new(), events: 0 }).collect();
        for i in 0..self.n_spans() {
            let sp = self.span(i);
            // first event time strictly after start
            let lo = times.partition_point(|&t| t <= sp.start);
            // one past the last event time <= stop
            let hi = times.partition_point(|&t| t <= sp.stop);
            for set in &mut sets[lo..hi] {
                set.spans.push(i);
            }
            if sp.event && hi > 0 && times[hi - 1] == sp.stop {
                sets[hi - 1].events += 1;
            }
        }
        sets
    }

    /// Sum of risk-set sizes over event times, without materializing them.
    pub fn stacked_row_count(&self) -> usize {
        let times = self.event_times();
        (0..self.n_spans())
            .map(|i| {
                let sp = self.span(i);
                times.partition_point(|&t| t <= sp.stop) - times.partition_point(|&t| t <= sp.start)
            })
            .sum()
    }

    /// Members of the risk set at the observed event time `t`.
    pub fn risk_set(&self, t: T) -> Result<Vec<RiskMember<'_, T>>> {
        if !self.event_times().contains(&t) {
            return Err(Error::Argument(format!("{t} is not an observed event time")));
        }
        Ok((0..self.n_spans())
            .map(|i| self.span(i))
            .filter(|sp| sp.start < t && t <= sp.stop)
            .map(|sp| RiskMember {
                subject: sp.subject,
                id: &self.subjects[sp.subject].id,
                covariates: sp.covariates,
                event: sp.event && sp.stop == t,
            })
            .collect())
    }

    /// Keeps only the given subjects, in the given order.
    pub fn select(&self, subjects: &[usize]) -> Result<Self> {
        match &self.records {
            Records::Single(rs) => {
                Self::from_subjects(subjects.iter().map(|&s| rs[s].clone()).collect(), self.covariate_names.clone())
            }
            Records::Counting(rs) => Self::from_intervals(
                subjects.iter().flat_map(|&s| self.subjects[s].spans.iter().map(|&i| rs[i].clone())).collect(),
                self.covariate_names.clone(),
            ),
        }
    }

    /// Converts every real value to another scalar type.
    pub fn cast<U: Scalar>(&self) -> SurvivalDataset<U> {
        let c = |v: T| U::of(v.f64());
        let cv = |v: &[T]| v.iter().map(|&x| c(x)).collect::<Vec<U>>();
        let records = match &self.records {
            Records::Single(rs) => Records::Single(
                rs.iter()
                    .map(|r| SubjectRecord {
                        id: r.id.clone(),
                        entry: c(r.entry),
                        exit: c(r.exit),
                        event: r.event,
                        covariates: cv(&r.covariates),
                    })
                    .collect(),
            ),
            Records::Counting(rs) => Records::Counting(
                rs.iter()
                    .map(|r| IntervalRecord {
                        id: r.id.clone(),
                        start: c(r.start),
                        stop: c(r.stop),
                        event: r.event,
                        covariates: cv(&r.covariates),
                    })
                    .collect(),
            ),
        };
        let subjects = self
            .subjects
            .iter()
            .map(|s| Subject { id: s.id.clone(), entry: c(s.entry), exit: c(s.exit), event: s.event, spans: s.spans.clone() })
            .collect();
        SurvivalDataset {
            records,
            covariate_names: self.covariate_names.clone(),
            subjects,
            span_owner: self.span_owner.clone(),
        }
    }
}

fn check_time<T: Scalar>(row: usize, what: &str, v: T, allow_zero: bool) -> Result<()> {
    if !v.is_finite() {
        return Err(Error::row(row, format!("{what} is not finite")));
    }
    if v < T::zero() || (!allow_zero && v == T::zero()) {
        return Err(Error::row(row, format!("{what} must be {} (got {v})", if allow_zero { "non-negative" } else { "positive" })));
    }
    Ok(())
}

fn check_covariates<T: Scalar>(row: usize, x: &[T], names: &[String]) -> Result<()> {
    if x.len() != names.len() {
        return Err(Error::row(row, format!("expected {} covariates, got {}", names.len(), x.len())));
    }
    if let Some(j) = x.iter().position(|v| !v.is_finite()) {
        return Err(Error::row(row, format!("covariate `{}` is not finite", names[j])));
    }
    Ok(())
}

fn parse_real<T: Scalar>(row: usize, column: &str, s: &str) -> Result<T> {
    if s.is_empty() {
        return Err(Error::row(row, format!("missing value in column `{column}`")));
    }
    let v: T = s.parse().map_err(|_| Error::row(row, format!("column `{column}`: `{s}` is not a number")))?;
    if !v.is_finite() {
        return Err(Error::row(row, format!("column `{column}`: value is not finite")));
    }
    Ok(v)
}

fn parse_event(row: usize, s: &str) -> Result<bool> {
    match s.parse::<f64>() {
        Ok(0.0) => Ok(false),
        Ok(1.0) => Ok(true),
        _ => Err(Error::row(row, format!("event must be 0 or 1 (got `{s}`)"))),
    }
}
