//! Tabular event data and the event logs materialized from it.
//!
//! An [`EventTable`] is a raw grid of text attributes. A [`ColumnMapping`]
//! picks which columns play the case, activity and resource roles; applying
//! it with [`build_log`] groups rows into [`Trace`]s.

use std::collections::HashMap;
use std::fmt;
use std::io::Write;
use std::path::Path;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventTable {
    column_names: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl EventTable {
    pub fn new(column_names: Vec<String>, rows: Vec<Vec<String>>) -> Result<Self> {
        let n = column_names.len();
        if n < 3 {
            return Err(Error::TooFewColumns(n));
        }
        for (i, name) in column_names.iter().enumerate() {
            if column_names[..i].contains(name) {
                return Err(Error::DuplicateColumn(name.clone()));
            }
        }
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::RaggedRow {
                    row: i + 1,
                    found: row.len(),
                    expected: n,
                });
            }
        }
        Ok(Self { column_names, rows })
    }

    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }

    pub fn rows(&self) -> &[Vec<String>] {
        &self.rows
    }

    pub fn n_columns(&self) -> usize {
        self.column_names.len()
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    /// Writes the table as delimited text with a header row.
    pub fn write_delimited<W: Write>(&self, out: W, delimiter: u8) -> Result<()> {
        let mut writer = csv::WriterBuilder::new()
            .delimiter(delimiter)
            .from_writer(out);
        let csv_err = |e: csv::Error| Error::Csv {
            row: 0,
            message: e.to_string(),
        };
        writer.write_record(&self.column_names).map_err(csv_err)?;
        for row in &self.rows {
            writer.write_record(row).map_err(csv_err)?;
        }
        writer.flush().map_err(|e| Error::io("<output>", e))?;
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>, delimiter: u8) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_delimited(std::io::BufWriter::new(file), delimiter)
    }
}

/// Reads a delimiter-separated file into an [`EventTable`].
///
/// Without a header row, columns are named `col_0 .. col_{n-1}`. Ragged rows
/// are reported with their 1-based line number in the file.
pub fn load_table(path: impl AsRef<Path>, delimiter: u8, has_header: bool) -> Result<EventTable> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_table(file, delimiter, has_header)
}

pub fn read_table<R: std::io::Read>(input: R, delimiter: u8, has_header: bool) -> Result<EventTable> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .has_headers(false)
        .flexible(true)
        .from_reader(input);

    let mut records = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Csv {
            row: i + 1,
            message: e.to_string(),
        })?;
        records.push(record.iter().map(str::to_owned).collect::<Vec<_>>());
    }

    let mut records = records.into_iter();
    let (column_names, first_line) = if has_header {
        match records.next() {
            Some(header) => (header, 2),
            None => return Err(Error::TooFewColumns(0)),
        }
    } else {
        let rows: Vec<_> = records.collect();
        let width = rows.first().map_or(0, Vec::len);
        let names = (0..width).map(|i| format!("col_{i}")).collect();
        records = rows.into_iter();
        (names, 1)
    };

    let width = column_names.len();
    if width < 3 {
        return Err(Error::TooFewColumns(width));
    }
    let mut rows = Vec::new();
    for (i, row) in records.enumerate() {
        if row.len() != width {
            return Err(Error::RaggedRow {
                row: i + first_line,
                found: row.len(),
                expected: width,
            });
        }
        rows.push(row);
    }
    EventTable::new(column_names, rows)
}

/// Assignment of table columns to the case, activity and resource roles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ColumnMapping {
    pub case_col: usize,
    pub activity_col: usize,
    pub resource_col: usize,
    pub timestamp_col: Option<usize>,
}

impl ColumnMapping {
    pub fn new(case_col: usize, activity_col: usize, resource_col: usize) -> Self {
        Self {
            case_col,
            activity_col,
            resource_col,
            timestamp_col: None,
        }
    }

    pub fn with_timestamp(mut self, col: usize) -> Self {
        self.timestamp_col = Some(col);
        self
    }

    pub fn validate(&self, n_columns: usize) -> Result<()> {
        let roles = [self.case_col, self.activity_col, self.resource_col];
        for (name, col) in ["case", "activity", "resource"].iter().zip(roles) {
            if col >= n_columns {
                return Err(Error::Mapping(format!(
                    "{name} column {col} out of range for {n_columns} columns"
                )));
            }
        }
        if let Some(ts) = self.timestamp_col {
            if ts >= n_columns {
                return Err(Error::Mapping(format!(
                    "timestamp column {ts} out of range for {n_columns} columns"
                )));
            }
        }
        if roles[0] == roles[1] || roles[0] == roles[2] || roles[1] == roles[2] {
            return Err(Error::Mapping(format!(
                "case/activity/resource columns must be distinct, got {}/{}/{}",
                roles[0], roles[1], roles[2]
            )));
        }
        Ok(())
    }
}

impl fmt::Display for ColumnMapping {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},{}", self.case_col, self.activity_col, self.resource_col)?;
        if let Some(ts) = self.timestamp_col {
            write!(f, ",{ts}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Event {
    pub activity: String,
    pub resource: String,
    pub timestamp: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trace {
    pub case_id: String,
    pub events: Vec<Event>,
}

impl Trace {
    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn activities(&self) -> impl Iterator<Item = &str> {
        self.events.iter().map(|e| e.activity.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct EventLog {
    pub traces: Vec<Trace>,
    pub alphabet: Vec<String>,
}

impl EventLog {
    /// Builds a log from activity sequences; resources are left empty.
    pub fn from_sequences<S: AsRef<str>>(sequences: &[Vec<S>]) -> Self {
        let traces = sequences
            .iter()
            .enumerate()
            .filter(|(_, seq)| !seq.is_empty())
            .map(|(i, seq)| Trace {
                case_id: format!("case_{i}"),
                events: seq
                    .iter()
                    .map(|a| Event {
                        activity: a.as_ref().to_owned(),
                        resource: String::new(),
                        timestamp: None,
                    })
                    .collect(),
            })
            .collect();
        Self::from_traces(traces)
    }

    pub fn from_traces(traces: Vec<Trace>) -> Self {
        let mut alphabet = Vec::new();
        let mut seen = HashMap::new();
        for trace in &traces {
            for activity in trace.activities() {
                if !seen.contains_key(activity) {
                    seen.insert(activity.to_owned(), alphabet.len());
                    alphabet.push(activity.to_owned());
                }
            }
        }
        Self { traces, alphabet }
    }

    pub fn n_events(&self) -> usize {
        self.traces.iter().map(Trace::len).sum()
    }
}

/// Groups table rows into traces under `mapping`.
///
/// Traces appear in order of first occurrence of their case value. Within a
/// trace, events keep input row order unless a timestamp column is mapped, in
/// which case they are stably sorted by the raw timestamp text.
pub fn build_log(table: &EventTable, mapping: &ColumnMapping) -> Result<EventLog> {
    mapping.validate(table.n_columns())?;

    let mut index: HashMap<&str, usize> = HashMap::new();
    let mut traces: Vec<Trace> = Vec::new();
    for row in table.rows() {
        let case = row[mapping.case_col].as_str();
        let slot = *index.entry(case).or_insert_with(|| {
            traces.push(Trace {
                case_id: case.to_owned(),
                events: Vec::new(),
            });
            traces.len() - 1
        });
        traces[slot].events.push(Event {
            activity: row[mapping.activity_col].clone(),
            resource: row[mapping.resource_col].clone(),
            timestamp: mapping.timestamp_col.map(|c| row[c].clone()),
        });
    }

    if mapping.timestamp_col.is_some() {
        for trace in &mut traces {
            trace.events.sort_by(|a, b| a.timestamp.cmp(&b.timestamp));
        }
    }
    Ok(EventLog::from_traces(traces))
}

/// One position of a ground-truth process: a weighted choice among activities.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthStep {
    pub alternatives: Vec<(String, f64)>,
}

impl SynthStep {
    pub fn single(activity: impl Into<String>) -> Self {
        Self {
            alternatives: vec![(activity.into(), 1.0)],
        }
    }

    /// Parses `A`, `B|C` (equal weights) or `B:0.7|C:0.3`.
    pub fn parse(text: &str) -> Result<Self> {
        let mut alternatives = Vec::new();
        for part in text.split('|') {
            let part = part.trim();
            let (name, weight) = match part.rsplit_once(':') {
                Some((name, w)) => {
                    let w: f64 = w.trim().parse().map_err(|_| {
                        Error::SynthSpec(format!("bad branch probability in {part:?}"))
                    })?;
                    (name.trim(), w)
                }
                None => (part, 1.0),
            };
            if name.is_empty() {
                return Err(Error::SynthSpec(format!("empty activity in step {text:?}")));
            }
            alternatives.push((name.to_owned(), weight));
        }
        Ok(Self { alternatives })
    }
}

impl fmt::Display for SynthStep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, (name, w)) in self.alternatives.iter().enumerate() {
            if i > 0 {
                f.write_str("|")?;
            }
            if self.alternatives.len() == 1 {
                f.write_str(name)?;
            } else {
                write!(f, "{name}:{w}")?;
            }
        }
        Ok(())
    }
}

/// Parameters of a synthetic event table with one planted column mapping.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub n_cases: usize,
    pub process: Vec<SynthStep>,
    pub n_noise_columns: usize,
    /// Fraction of activity values replaced by a different activity.
    pub noise_rate: f64,
    /// Distinct values per noise column.
    pub noise_vocab: usize,
    pub n_resources: usize,
    /// Probability that an event is handled by its activity's home resource
    /// rather than a uniformly drawn one.
    pub resource_affinity: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n_cases: 100,
            process: ["A", "B", "C", "D", "E", "F"]
                .into_iter()
                .map(SynthStep::single)
                .collect(),
            n_noise_columns: 3,
            noise_rate: 0.0,
            noise_vocab: 10,
            n_resources: 4,
            resource_affinity: 0.5,
        }
    }
}

impl SynthSpec {
    pub fn sequence(n_cases: usize, activities: &[&str]) -> Self {
        Self {
            n_cases,
            process: activities.iter().copied().map(SynthStep::single).collect(),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::SynthSpec(m));
        if self.n_cases == 0 {
            return fail("n_cases must be at least 1".into());
        }
        if self.process.is_empty() {
            return fail("process must have at least one step".into());
        }
        for step in &self.process {
            if step.alternatives.is_empty() {
                return fail("process step without alternatives".into());
            }
            if step.alternatives.iter().any(|(_, w)| !(w.is_finite() && *w > 0.0)) {
                return fail(format!("branch weights must be positive in step {step}"));
            }
        }
        if !(0.0..=1.0).contains(&self.noise_rate) {
            return fail(format!("noise_rate {} outside [0, 1]", self.noise_rate));
        }
        if !(0.0..=1.0).contains(&self.resource_affinity) {
            return fail(format!(
                "resource_affinity {} outside [0, 1]",
                self.resource_affinity
            ));
        }
        if self.n_noise_columns > 0 && self.noise_vocab == 0 {
            return fail("noise_vocab must be at least 1".into());
        }
        if self.n_resources == 0 {
            return fail("n_resources must be at least 1".into());
        }
        Ok(())
    }

    /// Activities of the ground-truth process in first-appearance order.
    pub fn activities(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for step in &self.process {
            for (name, _) in &step.alternatives {
                if !out.contains(name) {
                    out.push(name.clone());
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticTable {
    pub table: EventTable,
    /// The mapping under which rows replay the ground-truth process.
    pub planted: ColumnMapping,
}

/// Generates a deterministic synthetic event table.
///
/// Columns are `case_id, activity, resource, attr_1 .. attr_k`; the planted
/// mapping is `(0, 1, 2)`. Rows are emitted case by case.
pub fn generate_synthetic_table(spec: &SynthSpec, seed: u64) -> Result<SyntheticTable> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let activities = spec.activities();
    let resources: Vec<String> = (1..=spec.n_resources).map(|i| format!("R{i}")).collect();
    let home: HashMap<&str, usize> = activities
        .iter()
        .enumerate()
        .map(|(i, a)| (a.as_str(), i % spec.n_resources))
        .collect();

    let mut column_names: Vec<String> =
        vec!["case_id".into(), "activity".into(), "resource".into()];
    column_names.extend((1..=spec.n_noise_columns).map(|i| format!("attr_{i}")));

    let width = (spec.n_cases.max(1) as f64).log10() as usize + 1;
    let mut rows = Vec::new();
    for case in 0..spec.n_cases {
        let case_id = format!("C{:0width$}", case + 1, width = width.max(2));
        for step in &spec.process {
            let mut activity = pick_weighted(&step.alternatives, &mut rng).to_owned();
            if spec.noise_rate > 0.0 && activities.len() > 1 && rng.random::<f64>() < spec.noise_rate {
                let others: Vec<&String> = activities.iter().filter(|a| **a != activity).collect();
                activity = (*others.choose(&mut rng).expect("non-empty")).clone();
            }
            let resource = if rng.random::<f64>() < spec.resource_affinity {
                resources[home[activity.as_str()]].clone()
            } else {
                resources.choose(&mut rng).expect("non-empty").clone()
            };
            let mut row = vec![case_id.clone(), activity, resource];
            for _ in 0..spec.n_noise_columns {
                row.push(format!("v{}", rng.random_range(0..spec.noise_vocab)));
            }
            rows.push(row);
        }
    }

    Ok(SyntheticTable {
        table: EventTable::new(column_names, rows)?,
        planted: ColumnMapping::new(0, 1, 2),
    })
}

fn pick_weighted<'a, R: Rng>(alternatives: &'a [(String, f64)], rng: &mut R) -> &'a str {
    if alternatives.len() == 1 {
        return &alternatives[0].0;
    }
    let total: f64 = alternatives.iter().map(|(_, w)| w).sum();
    let mut u = rng.random::<f64>() * total;
    for (name, w) in alternatives {
        if u < *w {
            return name;
        }
        u -= w;
    }
    &alternatives[alternatives.len() - 1].0
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(rows: &[&[&str]]) -> EventTable {
        let names = (0..rows[0].len()).map(|i| format!("c{i}")).collect();
        let rows = rows
            .iter()
            .map(|r| r.iter().map(|s| s.to_string()).collect())
            .collect();
        EventTable::new(names, rows).unwrap()
    }

    fn seqs(log: &EventLog) -> Vec<(String, Vec<String>)> {
        log.traces
            .iter()
            .map(|t| (t.case_id.clone(), t.activities().map(str::to_owned).collect()))
            .collect()
    }

    #[test]
    fn loads_header_file() {
        let text = "case,act,res\nC01,Load,Crane1\nC01,Move,Truck2\n";
        let t = read_table(text.as_bytes(), b',', true).unwrap();
        assert_eq!(t.n_columns(), 3);
        assert_eq!(t.n_rows(), 2);
        assert_eq!(t.column_names(), ["case", "act", "res"]);
    }

    #[test]
    fn ragged_row_is_reported_with_line() {
        let text = "case,act,res\nC01,Load,Crane1\nC01,Move\n";
        match read_table(text.as_bytes(), b',', true) {
            Err(Error::RaggedRow { row, found, expected }) => {
                assert_eq!((row, found, expected), (3, 2, 3));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn headerless_columns_are_numbered() {
        let text = "a;b;c;d\ne;f;g;h\n";
        let t = read_table(text.as_bytes(), b';', false).unwrap();
        assert_eq!(t.column_names(), ["col_0", "col_1", "col_2", "col_3"]);
        assert_eq!(t.n_rows(), 2);
    }

    #[test]
    fn two_columns_rejected() {
        let err = read_table("a,b\n1,2\n".as_bytes(), b',', true).unwrap_err();
        assert!(matches!(err, Error::TooFewColumns(2)));
    }

    #[test]
    fn missing_file_is_io_error() {
        let err = load_table("/nonexistent/events.csv", b',', true).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }

    #[test]
    fn groups_by_case() {
        let t = table(&[&["C01", "A", "x"], &["C02", "B", "y"], &["C01", "C", "z"]]);
        let log = build_log(&t, &ColumnMapping::new(0, 1, 2)).unwrap();
        assert_eq!(
            seqs(&log),
            vec![
                ("C01".into(), vec!["A".into(), "C".into()]),
                ("C02".into(), vec!["B".into()]),
            ]
        );
        assert_eq!(log.alphabet, ["A", "C", "B"]);
    }

    #[test]
    fn swapped_mapping_regroups() {
        let t = table(&[&["C01", "A", "x"], &["C02", "B", "y"], &["C01", "C", "z"]]);
        let log = build_log(&t, &ColumnMapping::new(1, 0, 2)).unwrap();
        assert_eq!(
            seqs(&log),
            vec![
                ("A".into(), vec!["C01".into()]),
                ("B".into(), vec!["C02".into()]),
                ("C".into(), vec!["C01".into()]),
            ]
        );
        assert_eq!(log.alphabet, ["C01", "C02"]);
    }

    #[test]
    fn empty_table_gives_empty_log() {
        let t = EventTable::new(vec!["a".into(), "b".into(), "c".into()], vec![]).unwrap();
        let log = build_log(&t, &ColumnMapping::new(0, 1, 2)).unwrap();
        assert!(log.traces.is_empty());
        assert!(log.alphabet.is_empty());
    }

    #[test]
    fn timestamp_sort_is_stable() {
        let t = table(&[
            &["C1", "A", "r", "2"],
            &["C1", "B", "r", "1"],
            &["C1", "C", "r", "2"],
        ]);
        let log = build_log(&t, &ColumnMapping::new(0, 1, 2).with_timestamp(3)).unwrap();
        let acts: Vec<_> = log.traces[0].activities().collect();
        assert_eq!(acts, ["B", "A", "C"]);
    }

    #[test]
    fn invalid_mappings() {
        let t = table(&[&["C01", "A", "x"]]);
        assert!(matches!(
            build_log(&t, &ColumnMapping::new(0, 0, 2)),
            Err(Error::Mapping(_))
        ));
        assert!(matches!(
            build_log(&t, &ColumnMapping::new(0, 1, 3)),
            Err(Error::Mapping(_))
        ));
    }

    #[test]
    fn duplicate_column_names_rejected() {
        let err = EventTable::new(vec!["a".into(), "a".into(), "b".into()], vec![]).unwrap_err();
        assert!(matches!(err, Error::DuplicateColumn(_)));
    }

    #[test]
    fn zero_noise_synthetic_replays_ground_truth() {
        let spec = SynthSpec {
            noise_rate: 0.0,
            ..SynthSpec::sequence(10, &["A", "B", "C"])
        };
        let synth = generate_synthetic_table(&spec, 3).unwrap();
        let log = build_log(&synth.table, &synth.planted).unwrap();
        assert_eq!(log.traces.len(), 10);
        for trace in &log.traces {
            assert_eq!(trace.activities().collect::<Vec<_>>(), ["A", "B", "C"]);
        }
    }

    #[test]
    fn synthetic_seeds_differ_but_columns_match() {
        let spec = SynthSpec {
            noise_rate: 0.3,
            ..SynthSpec::sequence(10, &["A", "B", "C"])
        };
        let a = generate_synthetic_table(&spec, 1).unwrap();
        let b = generate_synthetic_table(&spec, 2).unwrap();
        assert_ne!(a.table, b.table);
        assert_eq!(a.table.column_names(), b.table.column_names());
        assert_eq!(a.table, generate_synthetic_table(&spec, 1).unwrap().table);
    }

    #[test]
    fn synthetic_noise_columns_count() {
        let spec = SynthSpec {
            n_noise_columns: 2,
            ..SynthSpec::sequence(5, &["A", "B"])
        };
        let t = generate_synthetic_table(&spec, 0).unwrap().table;
        assert_eq!(t.n_columns(), 5);
    }

    #[test]
    fn synthetic_spec_validation() {
        let bad = SynthSpec {
            n_cases: 0,
            ..SynthSpec::default()
        };
        assert!(matches!(generate_synthetic_table(&bad, 0), Err(Error::SynthSpec(_))));
        let bad = SynthSpec {
            noise_rate: 1.5,
            ..SynthSpec::default()
        };
        assert!(matches!(generate_synthetic_table(&bad, 0), Err(Error::SynthSpec(_))));
    }

    #[test]
    fn step_parsing() {
        let s = SynthStep::parse("B:0.7|C:0.3").unwrap();
        assert_eq!(s.alternatives, vec![("B".into(), 0.7), ("C".into(), 0.3)]);
        assert_eq!(SynthStep::parse(s.to_string().as_str()).unwrap(), s);
        assert!(SynthStep::parse("B:x").is_err());
    }
}
