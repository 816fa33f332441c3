//! Rating-event ingestion: CSV files in, validated per-entity
//! piecewise-constant rating paths out.
//!
//! The event file is comma-separated with a `entity_id,date,grade`
//! header, ISO-8601 dates and one event per row; a `.gz` suffix is
//! transparently decompressed. Events are forward-filled into daily
//! resolution segments: a segment covers `[start, end]` inclusive and
//! the entity holds its state on every day of the span. A withdrawal
//! marker ends the path early (right-censoring); entities first rated
//! mid-study simply enter the sample late (left truncation).

use std::fmt;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

/// The 15-grade scale, lowest first: `E-` (state 1, the default end)
/// up to `A+` (state 15).
pub const GRADE_SYMBOLS: [&str; 15] = [
    "E-", "E", "E+", "D-", "D", "D+", "C-", "C", "C+", "B-", "B", "B+", "A-", "A", "A+",
];

/// Default marker for an entity leaving the rated universe.
pub const WITHDRAWAL_MARKER: &str = "WR";

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("header must be `entity_id,date,grade`, got `{0}`")]
    BadHeader(String),
    #[error("line {line}: {reason}")]
    MalformedRow { line: u64, reason: String },
    #[error("line {line}: unknown grade symbol `{symbol}`")]
    UnknownGrade { line: u64, symbol: String },
    #[error("line {line}: date {date} outside the study interval {start}..={end}")]
    OutOfInterval { line: u64, date: NaiveDate, start: NaiveDate, end: NaiveDate },
    #[error("duplicate event for entity `{entity}` on {date}")]
    DuplicateEvent { entity: String, date: NaiveDate },
    #[error("entity `{entity}`: withdrawal on {date} precedes any rating")]
    WithdrawalBeforeRated { entity: String, date: NaiveDate },
    #[error("entity `{entity}`: event on {date} follows a withdrawal (rerating needs the split-spells option)")]
    EventAfterWithdrawal { entity: String, date: NaiveDate },
    #[error(transparent)]
    History(#[from] HistoryError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HistoryError {
    #[error("history needs at least one segment")]
    Empty,
    #[error("segment {index} spans {start} to {end}, which is backwards")]
    InvalidSpan { index: usize, start: NaiveDate, end: NaiveDate },
    #[error("segment {index} does not start the day after its predecessor ends")]
    NonContiguous { index: usize },
    #[error("segment {index} repeats the previous state (not a transition)")]
    RepeatedState { index: usize },
    #[error("segment {index} has state 0; states are 1-based")]
    ZeroState { index: usize },
}

/// Grade alphabet used by a file: the standard 15-symbol letter scale
/// or plain 1-based integers for synthetic data on other state counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum GradeScale {
    #[default]
    Standard15,
    Numeric { n: usize },
}

impl GradeScale {
    pub fn n(&self) -> usize {
        match self {
            GradeScale::Standard15 => 15,
            GradeScale::Numeric { n } => *n,
        }
    }

    /// Parses a grade token into its 1-based state index.
    pub fn parse_grade(&self, symbol: &str) -> Option<usize> {
        match self {
            GradeScale::Standard15 => grade_to_index(symbol).ok(),
            GradeScale::Numeric { n } => match symbol.parse::<usize>() {
                Ok(k) if (1..=*n).contains(&k) => Some(k),
                _ => None,
            },
        }
    }

    /// Token written for a 1-based state index.
    pub fn grade_symbol(&self, state: usize) -> String {
        match self {
            GradeScale::Standard15 => GRADE_SYMBOLS
                .get(state.wrapping_sub(1))
                .map(|s| (*s).to_owned())
                .unwrap_or_else(|| state.to_string()),
            GradeScale::Numeric { .. } => state.to_string(),
        }
    }
}

impl fmt::Display for GradeScale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GradeScale::Standard15 => write!(f, "15symbols"),
            GradeScale::Numeric { n } => write!(f, "numeric:{n}"),
        }
    }
}

impl FromStr for GradeScale {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "15symbols" {
            return Ok(GradeScale::Standard15);
        }
        if let Some(num) = s.strip_prefix("numeric:") {
            let n: usize = num.parse().map_err(|_| format!("bad state count in `{s}`"))?;
            if n < 2 {
                return Err(format!("numeric scale needs at least 2 states, got {n}"));
            }
            return Ok(GradeScale::Numeric { n });
        }
        Err(format!("unknown grade scale `{s}` (use `15symbols` or `numeric:N`)"))
    }
}

impl From<GradeScale> for String {
    fn from(scale: GradeScale) -> String {
        scale.to_string()
    }
}

impl TryFrom<String> for GradeScale {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

/// Maps a 15-scale symbol to its 1-based state index: `E-` is 1 (the
/// default end), `A+` is 15. The map is monotone in credit quality.
pub fn grade_to_index(symbol: &str) -> Result<usize, UnknownGradeSymbol> {
    GRADE_SYMBOLS
        .iter()
        .position(|&s| s == symbol)
        .map(|pos| pos + 1)
        .ok_or_else(|| UnknownGradeSymbol(symbol.to_owned()))
}

/// Inverse of [`grade_to_index`].
pub fn index_to_grade(state: usize) -> Option<&'static str> {
    GRADE_SYMBOLS.get(state.wrapping_sub(1)).copied()
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("unknown grade symbol `{0}`")]
pub struct UnknownGradeSymbol(pub String);

/// One raw event row of a rating file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RatingEvent {
    pub entity_id: String,
    pub date: NaiveDate,
    /// 1-based state index, or `None` for a withdrawal.
    pub state: Option<usize>,
}

/// Maximal span of consecutive days an entity holds one state,
/// inclusive at both ends.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub start: NaiveDate,
    pub end: NaiveDate,
    /// 1-based state index.
    pub state: usize,
}

impl Segment {
    pub fn contains(&self, date: NaiveDate) -> bool {
        self.start <= date && date <= self.end
    }

    /// Number of days covered, counting both endpoints.
    pub fn days(&self) -> i64 {
        (self.end - self.start).num_days() + 1
    }
}

/// One entity's rating path: chronologically ordered, contiguous,
/// state-alternating segments. The path ends at the study end or at
/// withdrawal, whichever comes first.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RatingHistory {
    entity_id: String,
    segments: Vec<Segment>,
}

impl RatingHistory {
    pub fn new(entity_id: String, segments: Vec<Segment>) -> Result<Self, HistoryError> {
        if segments.is_empty() {
            return Err(HistoryError::Empty);
        }
        for (index, seg) in segments.iter().enumerate() {
            if seg.start > seg.end {
                return Err(HistoryError::InvalidSpan { index, start: seg.start, end: seg.end });
            }
            if seg.state == 0 {
                return Err(HistoryError::ZeroState { index });
            }
            if index > 0 {
                let prev = &segments[index - 1];
                if seg.start != prev.end + chrono::Days::new(1) {
                    return Err(HistoryError::NonContiguous { index });
                }
                if seg.state == prev.state {
                    return Err(HistoryError::RepeatedState { index });
                }
            }
        }
        Ok(Self { entity_id, segments })
    }

    /// Constructor for segment lists that already satisfy the
    /// invariants by construction (coarsening, simulation).
    pub(crate) fn from_validated_segments(entity_id: String, segments: Vec<Segment>) -> Self {
        debug_assert!(Self::new(entity_id.clone(), segments.clone()).is_ok());
        Self { entity_id, segments }
    }

    pub fn entity_id(&self) -> &str {
        &self.entity_id
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    /// State held on `date`, or `None` when the entity is unrated
    /// (before first observation or after withdrawal).
    pub fn state_at(&self, date: NaiveDate) -> Option<usize> {
        let idx = self.segments.partition_point(|seg| seg.start <= date);
        if idx == 0 {
            return None;
        }
        let seg = &self.segments[idx - 1];
        seg.contains(date).then_some(seg.state)
    }

    /// Number of genuine state changes: segments minus one.
    pub fn transitions(&self) -> usize {
        self.segments.len() - 1
    }

    pub fn first_observed(&self) -> NaiveDate {
        self.segments[0].start
    }

    pub fn last_observed(&self) -> NaiveDate {
        self.segments[self.segments.len() - 1].end
    }

    /// Largest state index present in the path.
    pub fn max_state(&self) -> usize {
        self.segments.iter().map(|s| s.state).max().unwrap_or(0)
    }
}

/// How to treat an entity that is rated again after a withdrawal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReratingPolicy {
    /// Reject the file (default): each entity is one uninterrupted path.
    #[default]
    Reject,
    /// Start a fresh path under `entity_id/2`, `entity_id/3`, ...; each
    /// spell is censored independently.
    SplitSpells,
}

/// Parsing parameters: study interval, grade alphabet, markers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestConfig {
    pub study_start: NaiveDate,
    pub study_end: NaiveDate,
    #[serde(default)]
    pub scale: GradeScale,
    #[serde(default = "default_withdrawal_marker")]
    pub withdrawal_marker: String,
    #[serde(default)]
    pub rerating: ReratingPolicy,
}

fn default_withdrawal_marker() -> String {
    WITHDRAWAL_MARKER.to_owned()
}

impl Default for IngestConfig {
    fn default() -> Self {
        Self {
            study_start: NaiveDate::from_ymd_opt(2007, 1, 1).unwrap(),
            study_end: NaiveDate::from_ymd_opt(2013, 1, 1).unwrap(),
            scale: GradeScale::Standard15,
            withdrawal_marker: default_withdrawal_marker(),
            rerating: ReratingPolicy::Reject,
        }
    }
}

/// Parses a rating-event file into one history per entity (per spell
/// under [`ReratingPolicy::SplitSpells`]), sorted by entity id.
pub fn parse_history_file<P: AsRef<Path>>(
    path: P,
    config: &IngestConfig,
) -> Result<Vec<RatingHistory>, IngestError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| IngestError::Io {
        path: path.display().to_string(),
        source,
    })?;
    if path.extension().is_some_and(|ext| ext == "gz") {
        parse_history_reader(flate2::read::GzDecoder::new(file), config)
    } else {
        parse_history_reader(file, config)
    }
}

/// Parses raw event rows from any reader, without building histories.
pub fn parse_events_reader<R: Read>(
    reader: R,
    config: &IngestConfig,
) -> Result<Vec<RatingEvent>, IngestError> {
    let mut csv_reader = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    {
        let headers = csv_reader.headers()?;
        let got: Vec<&str> = headers.iter().map(str::trim).collect();
        if got != ["entity_id", "date", "grade"] {
            return Err(IngestError::BadHeader(got.join(",")));
        }
    }

    let mut events = Vec::new();
    for record in csv_reader.records() {
        let record = record?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != 3 {
            return Err(IngestError::MalformedRow {
                line,
                reason: format!("expected 3 fields, got {}", record.len()),
            });
        }
        let entity = record[0].trim();
        if entity.is_empty() {
            return Err(IngestError::MalformedRow { line, reason: "empty entity_id".into() });
        }
        let date_str = record[1].trim();
        let date = NaiveDate::parse_from_str(date_str, "%Y-%m-%d").map_err(|e| {
            IngestError::MalformedRow { line, reason: format!("bad date `{date_str}`: {e}") }
        })?;
        if date < config.study_start || date > config.study_end {
            return Err(IngestError::OutOfInterval {
                line,
                date,
                start: config.study_start,
                end: config.study_end,
            });
        }
        let grade = record[2].trim();
        let state = if grade == config.withdrawal_marker {
            None
        } else {
            Some(
                config
                    .scale
                    .parse_grade(grade)
                    .ok_or_else(|| IngestError::UnknownGrade { line, symbol: grade.to_owned() })?,
            )
        };
        events.push(RatingEvent { entity_id: entity.to_owned(), date, state });
    }
    Ok(events)
}

/// Parses rating events from any reader and forward-fills them into
/// histories. Rows may arrive out of order; they are sorted per entity
/// before segments are built.
pub fn parse_history_reader<R: Read>(
    reader: R,
    config: &IngestConfig,
) -> Result<Vec<RatingHistory>, IngestError> {
    // Group per entity; BTreeMap keeps output order independent of row
    // order in the file.
    let mut grouped: BTreeMap<String, Vec<(NaiveDate, Option<usize>)>> = BTreeMap::new();
    for event in parse_events_reader(reader, config)? {
        grouped.entry(event.entity_id).or_default().push((event.date, event.state));
    }

    let mut histories = Vec::with_capacity(grouped.len());
    for (entity, mut rows) in grouped {
        rows.sort_by_key(|&(date, _)| date);
        for pair in rows.windows(2) {
            if pair[0].0 == pair[1].0 {
                return Err(IngestError::DuplicateEvent { entity, date: pair[0].0 });
            }
        }
        build_spells(&entity, &rows, config, &mut histories)?;
    }
    histories.sort_by(|a, b| a.entity_id.cmp(&b.entity_id));
    Ok(histories)
}

/// Forward-fills one entity's sorted events into segment lists, one
/// history per rated spell.
fn build_spells(
    entity: &str,
    rows: &[(NaiveDate, Option<usize>)],
    config: &IngestConfig,
    out: &mut Vec<RatingHistory>,
) -> Result<(), IngestError> {
    let mut spell = 1usize;
    let mut segments: Vec<Segment> = Vec::new();
    let mut withdrawn = false;

    let flush =
        |segments: &mut Vec<Segment>, spell: &mut usize, out: &mut Vec<RatingHistory>| {
            if segments.is_empty() {
                return;
            }
            let id = if *spell == 1 {
                entity.to_owned()
            } else {
                format!("{entity}/{spell}")
            };
            out.push(RatingHistory::from_validated_segments(id, std::mem::take(segments)));
            *spell += 1;
        };

    for &(date, state) in rows {
        if withdrawn {
            match config.rerating {
                ReratingPolicy::Reject => {
                    return Err(IngestError::EventAfterWithdrawal {
                        entity: entity.to_owned(),
                        date,
                    });
                }
                ReratingPolicy::SplitSpells => {
                    flush(&mut segments, &mut spell, out);
                    withdrawn = false;
                }
            }
        }
        match state {
            Some(state) => match segments.last_mut() {
                Some(last) if last.state == state => {
                    // Same grade re-affirmed: forward fill, no transition.
                    last.end = config.study_end;
                }
                Some(last) => {
                    last.end = date - chrono::Days::new(1);
                    segments.push(Segment { start: date, end: config.study_end, state });
                }
                None => {
                    segments.push(Segment { start: date, end: config.study_end, state });
                }
            },
            None => match segments.last_mut() {
                Some(last) => {
                    last.end = date - chrono::Days::new(1);
                    withdrawn = true;
                }
                None => {
                    return Err(IngestError::WithdrawalBeforeRated {
                        entity: entity.to_owned(),
                        date,
                    });
                }
            },
        }
    }
    flush(&mut segments, &mut spell, out);
    Ok(())
}

/// Writes histories back to the event-file format. Emits one row per
/// segment start plus a withdrawal row whenever a path ends before the
/// study end, so parsing the output reproduces the input histories.
pub fn write_histories_csv<W: Write>(
    writer: W,
    histories: &[RatingHistory],
    config: &IngestConfig,
) -> Result<(), IngestError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["entity_id", "date", "grade"])?;
    for history in histories {
        for seg in history.segments() {
            w.write_record([
                history.entity_id(),
                &seg.start.format("%Y-%m-%d").to_string(),
                &config.scale.grade_symbol(seg.state),
            ])?;
        }
        let last_end = history.last_observed();
        if last_end < config.study_end {
            w.write_record([
                history.entity_id(),
                &(last_end + chrono::Days::new(1)).format("%Y-%m-%d").to_string(),
                &config.withdrawal_marker,
            ])?;
        }
    }
    w.flush().map_err(|source| IngestError::Io { path: "<writer>".into(), source })?;
    Ok(())
}

/// [`write_histories_csv`] to a file path; `.gz` selects gzip output.
pub fn write_histories_file<P: AsRef<Path>>(
    path: P,
    histories: &[RatingHistory],
    config: &IngestConfig,
) -> Result<(), IngestError> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|source| IngestError::Io {
        path: path.display().to_string(),
        source,
    })?;
    if path.extension().is_some_and(|ext| ext == "gz") {
        let encoder = flate2::write::GzEncoder::new(file, flate2::Compression::default());
        write_histories_csv(encoder, histories, config)
    } else {
        write_histories_csv(file, histories, config)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(s: &str) -> NaiveDate {
        NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap()
    }

    fn parse(csv: &str) -> Result<Vec<RatingHistory>, IngestError> {
        parse_history_reader(csv.as_bytes(), &IngestConfig::default())
    }

    #[test]
    fn grade_map_endpoints_and_midpoint() {
        assert_eq!(grade_to_index("A+").unwrap(), 15);
        assert_eq!(grade_to_index("E-").unwrap(), 1);
        assert_eq!(grade_to_index("C").unwrap(), 8);
        assert!(grade_to_index("F").is_err());
        // Bijective and monotone over the full alphabet.
        let indices: Vec<usize> =
            GRADE_SYMBOLS.iter().map(|s| grade_to_index(s).unwrap()).collect();
        assert_eq!(indices, (1..=15).collect::<Vec<_>>());
        for (k, sym) in GRADE_SYMBOLS.iter().enumerate() {
            assert_eq!(index_to_grade(k + 1), Some(*sym));
        }
    }

    #[test]
    fn two_events_make_two_segments() {
        let histories = parse(
            "entity_id,date,grade\nE1,2007-01-01,B+\nE1,2008-06-01,B\n",
        )
        .unwrap();
        assert_eq!(histories.len(), 1);
        let h = &histories[0];
        assert_eq!(h.entity_id(), "E1");
        assert_eq!(h.segments().len(), 2);
        assert_eq!(h.segments()[0], Segment {
            start: d("2007-01-01"),
            end: d("2008-05-31"),
            state: 12,
        });
        assert_eq!(h.segments()[1], Segment {
            start: d("2008-06-01"),
            end: d("2013-01-01"),
            state: 11,
        });
        assert_eq!(h.transitions(), 1);
    }

    #[test]
    fn duplicate_date_rejected() {
        let err = parse("entity_id,date,grade\nE1,2007-01-01,B+\nE1,2007-01-01,B\n");
        assert!(matches!(err, Err(IngestError::DuplicateEvent { .. })));
    }

    #[test]
    fn out_of_order_rows_are_sorted() {
        let sorted = parse("entity_id,date,grade\nE1,2007-01-01,B+\nE1,2008-06-01,B\n").unwrap();
        let shuffled = parse("entity_id,date,grade\nE1,2008-06-01,B\nE1,2007-01-01,B+\n").unwrap();
        assert_eq!(sorted, shuffled);
    }

    #[test]
    fn unknown_grade_reports_line() {
        let err = parse("entity_id,date,grade\nE1,2007-01-01,B+\nE1,2008-06-01,Z9\n");
        match err {
            Err(IngestError::UnknownGrade { line, symbol }) => {
                assert_eq!(line, 3);
                assert_eq!(symbol, "Z9");
            }
            other => panic!("expected UnknownGrade, got {other:?}"),
        }
    }

    #[test]
    fn event_outside_study_interval_rejected() {
        let err = parse("entity_id,date,grade\nE1,2006-12-31,B+\n");
        assert!(matches!(err, Err(IngestError::OutOfInterval { .. })));
    }

    #[test]
    fn withdrawal_censors_the_path() {
        let histories = parse(
            "entity_id,date,grade\nE1,2007-01-01,B+\nE1,2009-03-05,WR\n",
        )
        .unwrap();
        let h = &histories[0];
        assert_eq!(h.segments().len(), 1);
        assert_eq!(h.last_observed(), d("2009-03-04"));
        assert_eq!(h.state_at(d("2009-03-04")), Some(12));
        assert_eq!(h.state_at(d("2009-03-05")), None);
    }

    #[test]
    fn rerating_rejected_by_default_split_on_request() {
        let csv = "entity_id,date,grade\nE1,2007-01-01,B+\nE1,2008-01-01,WR\nE1,2009-01-01,C\n";
        assert!(matches!(
            parse(csv),
            Err(IngestError::EventAfterWithdrawal { .. })
        ));

        let config = IngestConfig { rerating: ReratingPolicy::SplitSpells, ..Default::default() };
        let histories = parse_history_reader(csv.as_bytes(), &config).unwrap();
        assert_eq!(histories.len(), 2);
        assert_eq!(histories[0].entity_id(), "E1");
        assert_eq!(histories[1].entity_id(), "E1/2");
        assert_eq!(histories[0].last_observed(), d("2007-12-31"));
        assert_eq!(histories[1].first_observed(), d("2009-01-01"));
    }

    #[test]
    fn withdrawal_before_any_rating_rejected() {
        let err = parse("entity_id,date,grade\nE1,2007-02-01,WR\n");
        assert!(matches!(err, Err(IngestError::WithdrawalBeforeRated { .. })));
    }

    #[test]
    fn same_grade_reaffirmation_is_not_a_transition() {
        let histories = parse(
            "entity_id,date,grade\nE1,2007-01-01,B+\nE1,2008-01-01,B+\nE1,2009-01-01,B\n",
        )
        .unwrap();
        assert_eq!(histories[0].segments().len(), 2);
        assert_eq!(histories[0].transitions(), 1);
    }

    #[test]
    fn sampling_inside_segments_is_piecewise_constant() {
        let histories = parse(
            "entity_id,date,grade\nE1,2007-01-01,B+\nE1,2008-06-01,B\n",
        )
        .unwrap();
        let h = &histories[0];
        assert_eq!(h.state_at(d("2007-01-01")), Some(12));
        assert_eq!(h.state_at(d("2008-05-31")), Some(12));
        assert_eq!(h.state_at(d("2008-06-01")), Some(11));
        assert_eq!(h.state_at(d("2013-01-01")), Some(11));
        assert_eq!(h.state_at(d("2006-12-31")), None);
    }

    #[test]
    fn bad_header_rejected() {
        let err = parse("id,when,rating\nE1,2007-01-01,B+\n");
        assert!(matches!(err, Err(IngestError::BadHeader(_))));
    }

    #[test]
    fn numeric_scale_round_trip() {
        let scale = GradeScale::Numeric { n: 8 };
        assert_eq!(scale.parse_grade("1"), Some(1));
        assert_eq!(scale.parse_grade("8"), Some(8));
        assert_eq!(scale.parse_grade("9"), None);
        assert_eq!(scale.parse_grade("0"), None);
        assert_eq!(scale.grade_symbol(3), "3");
        assert_eq!("numeric:8".parse::<GradeScale>().unwrap(), scale);
        assert_eq!(scale.to_string(), "numeric:8");
        assert_eq!("15symbols".parse::<GradeScale>().unwrap(), GradeScale::Standard15);
    }

    #[test]
    fn serialize_then_parse_is_identity() {
        let config = IngestConfig::default();
        let histories = parse(
            "entity_id,date,grade\nE1,2007-01-01,B+\nE1,2008-06-01,B\nE2,2007-05-01,A\nE2,2010-01-01,WR\n",
        )
        .unwrap();
        let mut buf = Vec::new();
        write_histories_csv(&mut buf, &histories, &config).unwrap();
        let reparsed = parse_history_reader(buf.as_slice(), &config).unwrap();
        assert_eq!(histories, reparsed);
    }

    #[test]
    fn history_validation_catches_gaps_and_repeats() {
        let seg = |start: &str, end: &str, state: usize| Segment {
            start: d(start),
            end: d(end),
            state,
        };
        assert!(RatingHistory::new("X".into(), vec![]).is_err());
        assert!(matches!(
            RatingHistory::new("X".into(), vec![
                seg("2007-01-01", "2007-06-01", 1),
                seg("2007-06-03", "2008-01-01", 2),
            ]),
            Err(HistoryError::NonContiguous { index: 1 })
        ));
        assert!(matches!(
            RatingHistory::new("X".into(), vec![
                seg("2007-01-01", "2007-06-01", 1),
                seg("2007-06-02", "2008-01-01", 1),
            ]),
            Err(HistoryError::RepeatedState { index: 1 })
        ));
        assert!(matches!(
            RatingHistory::new("X".into(), vec![seg("2007-06-01", "2007-01-01", 1)]),
            Err(HistoryError::InvalidSpan { index: 0, .. })
        ));
    }
}
