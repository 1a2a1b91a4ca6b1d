//! Event and weather inputs, the 365-day calendar and wind chill.

use std::collections::BTreeSet;
use std::path::Path;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::SpatialGrid;
use crate::io::{fmt_f64, write_atomic};

/// Number of house types in the model.
pub const N_TYPES: u8 = 4;
pub const DAYS_PER_YEAR: usize = 365;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub x: f64,
    pub y: f64,
    /// Day index, possibly fractional; covariates use `floor(t)`.
    pub t: f64,
    /// House type, 1..=4.
    pub k: u8,
}

impl Event {
    pub fn day(&self) -> usize {
        self.t.floor() as usize
    }
}

/// Marked space-time events on a window and a day range `[0, t_len)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EventPattern {
    events: Vec<Event>,
    window: SpatialGrid,
    t_len: usize,
}

impl EventPattern {
    pub fn new(events: Vec<Event>, window: &SpatialGrid, t_len: usize) -> Result<Self> {
        for (i, e) in events.iter().enumerate() {
            validate_event(e, window, t_len).map_err(|m| Error::InvalidParameter(format!("event {i}: {m}")))?;
        }
        Ok(Self {
            events,
            window: window.clone(),
            t_len,
        })
    }

    pub fn empty(window: &SpatialGrid, t_len: usize) -> Self {
        Self {
            events: Vec::new(),
            window: window.clone(),
            t_len,
        }
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn window(&self) -> &SpatialGrid {
        &self.window
    }

    pub fn t_len(&self) -> usize {
        self.t_len
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Events of one house type.
    pub fn of_type(&self, k: u8) -> Self {
        Self {
            events: self.events.iter().filter(|e| e.k == k).copied().collect(),
            window: self.window.clone(),
            t_len: self.t_len,
        }
    }

    /// Concatenation of patterns on the same window and day range.
    pub fn merged(parts: &[Self]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::InvalidParameter("no patterns to merge".into()))?;
        if parts.iter().any(|p| p.window != first.window || p.t_len != first.t_len) {
            return Err(Error::GridMismatch("patterns differ in window or day range".into()));
        }
        Ok(Self {
            events: parts.iter().flat_map(|p| p.events.iter().copied()).collect(),
            window: first.window.clone(),
            t_len: first.t_len,
        })
    }

    pub fn counts_per_day(&self) -> Vec<usize> {
        let mut counts = vec![0; self.t_len];
        for e in &self.events {
            counts[e.day()] += 1;
        }
        counts
    }

    pub fn counts_per_cell(&self) -> Vec<usize> {
        let mut counts = vec![0; self.window.n_cells()];
        for e in &self.events {
            if let Some(c) = self.window.cell_of(e.x, e.y) {
                counts[c] += 1;
            }
        }
        counts
    }
}

fn validate_event(e: &Event, window: &SpatialGrid, t_len: usize) -> std::result::Result<(), String> {
    if !(1..=N_TYPES).contains(&e.k) {
        return Err(format!("house type {} not in 1..={N_TYPES}", e.k));
    }
    if !(e.x.is_finite() && e.y.is_finite() && e.t.is_finite()) {
        return Err("non-finite coordinate".into());
    }
    if !window.contains(e.x, e.y) {
        return Err(format!("({}, {}) outside the window", e.x, e.y));
    }
    if !(e.t >= 0.0 && e.t < t_len as f64) {
        return Err(format!("day {} outside [0, {t_len})", e.t));
    }
    Ok(())
}

/// Calendar with February 29 removed: every year has 365 day indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NoLeapCalendar {
    pub origin: NaiveDate,
}

pub fn is_leap_day(date: NaiveDate) -> bool {
    date.month() == 2 && date.day() == 29
}

/// Zero-based day of year in the 365-day calendar (Feb 29 has none).
fn noleap_ordinal(date: NaiveDate) -> Option<i64> {
    if is_leap_day(date) {
        return None;
    }
    let leap = NaiveDate::from_ymd_opt(date.year(), 2, 29).is_some();
    let mut o = date.ordinal0() as i64;
    if leap && date.month() > 2 {
        o -= 1;
    }
    Some(o)
}

impl NoLeapCalendar {
    pub fn new(origin: NaiveDate) -> Result<Self> {
        if is_leap_day(origin) {
            return Err(Error::InvalidParameter("calendar origin cannot be February 29".into()));
        }
        Ok(Self { origin })
    }

    /// Day index of `date`; `None` for February 29.
    pub fn day_index(&self, date: NaiveDate) -> Option<i64> {
        let o = noleap_ordinal(date)?;
        let o0 = noleap_ordinal(self.origin).expect("origin is not a leap day");
        Some(DAYS_PER_YEAR as i64 * (date.year() - self.origin.year()) as i64 + o - o0)
    }

    /// Day index used for predictions: February 29 maps to February 28.
    pub fn prediction_index(&self, date: NaiveDate) -> i64 {
        match self.day_index(date) {
            Some(i) => i,
            None => self
                .day_index(date.pred_opt().expect("Feb 28 exists"))
                .expect("Feb 28 is not a leap day"),
        }
    }

    pub fn date_of(&self, index: i64) -> NaiveDate {
        let o0 = noleap_ordinal(self.origin).expect("origin is not a leap day");
        let total = o0 + index;
        let year = self.origin.year() + total.div_euclid(DAYS_PER_YEAR as i64) as i32;
        let mut ord = total.rem_euclid(DAYS_PER_YEAR as i64) as u32;
        let leap = NaiveDate::from_ymd_opt(year, 2, 29).is_some();
        if leap && ord >= 59 {
            ord += 1;
        }
        NaiveDate::from_yo_opt(year, ord + 1).expect("valid ordinal")
    }
}

/// The JAG/TI wind-chill index in °C for wind speed in km/h. Below
/// 4.8 km/h the air temperature is returned unchanged.
pub fn compute_wind_chill(wind_speed: f64, temperature: f64) -> Result<f64> {
    if wind_speed.is_nan() || wind_speed < 0.0 {
        return Err(Error::InvalidParameter(format!("invalid wind speed {wind_speed}")));
    }
    if wind_speed < 4.8 {
        return Ok(temperature);
    }
    let v = wind_speed.powf(0.16);
    Ok(13.12 + 0.6215 * temperature - 11.37 * v + 0.3965 * temperature * v)
}

/// Daily temporal covariates for day indices `0..t_len`.
#[derive(Debug, Clone, PartialEq)]
pub struct TemporalCovariates {
    pub wind_speed: Vec<f64>,
    pub temperature: Vec<f64>,
    pub wind_chill: Vec<f64>,
    pub sunshine: Option<Vec<f64>>,
    pub visibility: Option<Vec<f64>>,
    pub calendar: Option<NoLeapCalendar>,
}

impl TemporalCovariates {
    pub fn new(
        wind_speed: Vec<f64>,
        temperature: Vec<f64>,
        wind_chill: Vec<f64>,
        sunshine: Option<Vec<f64>>,
        visibility: Option<Vec<f64>>,
    ) -> Result<Self> {
        let n = wind_speed.len();
        let columns = [Some(&temperature), Some(&wind_chill), sunshine.as_ref(), visibility.as_ref()];
        for col in columns.into_iter().flatten() {
            if col.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: col.len(),
                });
            }
        }
        let all = [Some(&wind_speed), Some(&temperature), Some(&wind_chill), sunshine.as_ref(), visibility.as_ref()];
        if all.into_iter().flatten().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("non-finite covariate value".into()));
        }
        Ok(Self {
            wind_speed,
            temperature,
            wind_chill,
            sunshine,
            visibility,
            calendar: None,
        })
    }

    /// Derives wind chill from wind speed and temperature.
    pub fn with_computed_wind_chill(
        wind_speed: Vec<f64>,
        temperature: Vec<f64>,
        sunshine: Option<Vec<f64>>,
        visibility: Option<Vec<f64>>,
    ) -> Result<Self> {
        let chill = wind_speed
            .iter()
            .zip(&temperature)
            .map(|(&v, &t)| compute_wind_chill(v, t))
            .collect::<Result<Vec<_>>>()?;
        Self::new(wind_speed, temperature, chill, sunshine, visibility)
    }

    pub fn with_calendar(mut self, calendar: NoLeapCalendar) -> Self {
        self.calendar = Some(calendar);
        self
    }

    pub fn t_len(&self) -> usize {
        self.wind_speed.len()
    }

    /// Named columns present, in canonical order.
    pub fn columns(&self) -> Vec<(&'static str, &[f64])> {
        let mut out: Vec<(&'static str, &[f64])> = vec![
            ("wind_speed", &self.wind_speed),
            ("temperature", &self.temperature),
            ("wind_chill", &self.wind_chill),
        ];
        if let Some(s) = &self.sunshine {
            out.push(("sunshine", s));
        }
        if let Some(v) = &self.visibility {
            out.push(("visibility", v));
        }
        out
    }

    /// Restriction to days `from..to`.
    pub fn slice(&self, from: usize, to: usize) -> Result<Self> {
        if from > to || to > self.t_len() {
            return Err(Error::OutOfRange(format!("days {from}..{to} outside 0..{}", self.t_len())));
        }
        let cut = |v: &Vec<f64>| v[from..to].to_vec();
        Ok(Self {
            wind_speed: cut(&self.wind_speed),
            temperature: cut(&self.temperature),
            wind_chill: cut(&self.wind_chill),
            sunshine: self.sunshine.as_ref().map(cut),
            visibility: self.visibility.as_ref().map(cut),
            calendar: self
                .calendar
                .map(|c| NoLeapCalendar { origin: c.date_of(from as i64) }),
        })
    }
}

/// One weather row as read from file, before leap-day removal.
#[derive(Debug, Clone, PartialEq)]
pub struct WeatherRecord {
    pub date: NaiveDate,
    pub wind_speed: f64,
    pub temperature: f64,
    pub wind_chill: Option<f64>,
    pub sunshine: Option<f64>,
    pub visibility: Option<f64>,
}

/// Event time as written in an events file.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EventTime {
    Day(f64),
    Date(NaiveDate),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RawEvent {
    pub x: f64,
    pub y: f64,
    pub t: EventTime,
    pub k: u8,
    /// 1-based line number in the source file.
    pub line: usize,
}

fn csv_reader(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::parse(path, line, format!("{other:?}")),
    }
}

fn header_index(headers: &csv::StringRecord, name: &str) -> Option<usize> {
    headers.iter().position(|h| h.eq_ignore_ascii_case(name))
}

/// Reads rows of an `x,y,t,k` file without validating them against a window.
pub fn read_raw_events(path: impl AsRef<Path>) -> Result<Vec<RawEvent>> {
    let path = path.as_ref();
    let mut rdr = csv_reader(path)?;
    let headers = rdr.headers().map_err(|e| csv_error(path, e))?.clone();
    let col = |name| header_index(&headers, name).ok_or_else(|| Error::parse(path, 1, format!("missing column `{name}`")));
    let (ix, iy, it, ik) = (col("x")?, col("y")?, col("t")?, col("k")?);
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        let field = |i: usize| rec.get(i).unwrap_or("");
        let num = |i: usize, name: &str| -> Result<f64> {
            field(i)
                .parse::<f64>()
                .map_err(|_| Error::parse(path, line, format!("bad {name} `{}`", field(i))))
        };
        let t = match field(it).parse::<f64>() {
            Ok(d) => EventTime::Day(d),
            Err(_) => EventTime::Date(
                NaiveDate::parse_from_str(field(it), "%Y-%m-%d")
                    .map_err(|_| Error::parse(path, line, format!("bad t `{}`", field(it))))?,
            ),
        };
        let k = field(ik)
            .parse::<u8>()
            .map_err(|_| Error::parse(path, line, format!("bad k `{}`", field(ik))))?;
        out.push(RawEvent {
            x: num(ix, "x")?,
            y: num(iy, "y")?,
            t,
            k,
            line,
        });
    }
    Ok(out)
}

/// Parses an event file whose `t` column holds day indices.
pub fn parse_events(path: impl AsRef<Path>, window: &SpatialGrid, t_len: usize) -> Result<EventPattern> {
    parse_events_with(path, window, t_len, None).map(|(p, _)| p)
}

/// Parses an event file whose `t` column may hold ISO dates, mapped through
/// `calendar`. February 29 events are dropped; the count dropped is returned.
pub fn parse_events_dated(
    path: impl AsRef<Path>,
    window: &SpatialGrid,
    t_len: usize,
    calendar: NoLeapCalendar,
) -> Result<(EventPattern, usize)> {
    parse_events_with(path, window, t_len, Some(calendar))
}

fn parse_events_with(
    path: impl AsRef<Path>,
    window: &SpatialGrid,
    t_len: usize,
    calendar: Option<NoLeapCalendar>,
) -> Result<(EventPattern, usize)> {
    let path = path.as_ref();
    let mut events = Vec::new();
    let mut dropped = 0;
    for raw in read_raw_events(path)? {
        let t = match (raw.t, calendar) {
            (EventTime::Day(d), _) => d,
            (EventTime::Date(date), Some(cal)) => match cal.day_index(date) {
                Some(i) => i as f64,
                None => {
                    dropped += 1;
                    continue;
                }
            },
            (EventTime::Date(_), None) => {
                return Err(Error::parse(path, raw.line, "dated event but no calendar origin given"));
            }
        };
        let e = Event {
            x: raw.x,
            y: raw.y,
            t,
            k: raw.k,
        };
        validate_event(&e, window, t_len).map_err(|m| Error::parse(path, raw.line, m))?;
        events.push(e);
    }
    Ok((
        EventPattern {
            events,
            window: window.clone(),
            t_len,
        },
        dropped,
    ))
}

pub fn format_events(pattern: &EventPattern) -> String {
    let mut out = String::from("x,y,t,k\n");
    for e in pattern.events() {
        out.push_str(&format!("{},{},{},{}\n", fmt_f64(e.x), fmt_f64(e.y), fmt_f64(e.t), e.k));
    }
    out
}

pub fn write_events(path: impl AsRef<Path>, pattern: &EventPattern) -> Result<()> {
    write_atomic(path.as_ref(), format_events(pattern).as_bytes())
}

/// Reads `date,wind_speed,temperature[,wind_chill,sunshine,visibility]`.
pub fn read_weather(path: impl AsRef<Path>) -> Result<Vec<WeatherRecord>> {
    let path = path.as_ref();
    let mut rdr = csv_reader(path)?;
    let headers = rdr.headers().map_err(|e| csv_error(path, e))?.clone();
    let req = |name| header_index(&headers, name).ok_or_else(|| Error::parse(path, 1, format!("missing column `{name}`")));
    let (idate, iv, it) = (req("date")?, req("wind_speed")?, req("temperature")?);
    let (ic, is, ivis) = (
        header_index(&headers, "wind_chill"),
        header_index(&headers, "sunshine"),
        header_index(&headers, "visibility"),
    );
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        let field = |i: usize| rec.get(i).unwrap_or("");
        let num = |i: usize| -> Result<f64> {
            let s = field(i);
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::parse(path, line, format!("bad number `{s}`")))
        };
        let opt = |i: Option<usize>| -> Result<Option<f64>> {
            match i {
                Some(i) if !field(i).is_empty() => num(i).map(Some),
                _ => Ok(None),
            }
        };
        let date = NaiveDate::parse_from_str(field(idate), "%Y-%m-%d")
            .map_err(|_| Error::parse(path, line, format!("bad date `{}`", field(idate))))?;
        out.push(WeatherRecord {
            date,
            wind_speed: num(iv)?,
            temperature: num(it)?,
            wind_chill: opt(ic)?,
            sunshine: opt(is)?,
            visibility: opt(ivis)?,
        });
    }
    Ok(out)
}

/// Removes February 29 from dated weather and events and renumbers days
/// consecutively from the first weather date.
///
/// Weather must cover consecutive dates (leap days aside) without
/// duplicates. Events are validated against `window` and the weather span.
pub fn drop_leap_days(
    weather: &[WeatherRecord],
    events: &[RawEvent],
    window: &SpatialGrid,
) -> Result<(TemporalCovariates, EventPattern)> {
    let mut seen = BTreeSet::new();
    for w in weather {
        if !seen.insert(w.date) {
            return Err(Error::InvalidParameter(format!("duplicate weather date {}", w.date)));
        }
    }
    let kept: Vec<&WeatherRecord> = weather.iter().filter(|w| !is_leap_day(w.date)).collect();
    let first = kept
        .first()
        .ok_or_else(|| Error::InvalidParameter("no weather records".into()))?;
    let calendar = NoLeapCalendar::new(first.date)?;
    for (i, w) in kept.iter().enumerate() {
        let idx = calendar.day_index(w.date).expect("leap days removed");
        if idx != i as i64 {
            return Err(Error::InvalidParameter(format!(
                "weather dates not consecutive at {} (expected {})",
                w.date,
                calendar.date_of(i as i64)
            )));
        }
    }
    let speed: Vec<f64> = kept.iter().map(|w| w.wind_speed).collect();
    let temp: Vec<f64> = kept.iter().map(|w| w.temperature).collect();
    let chill = kept
        .iter()
        .map(|w| match w.wind_chill {
            Some(c) => Ok(c),
            None => compute_wind_chill(w.wind_speed, w.temperature),
        })
        .collect::<Result<Vec<_>>>()?;
    let optional = |get: fn(&WeatherRecord) -> Option<f64>| -> Option<Vec<f64>> {
        kept.iter().map(|w| get(w)).collect::<Option<Vec<_>>>()
    };
    let covariates = TemporalCovariates::new(
        speed,
        temp,
        chill,
        optional(|w| w.sunshine),
        optional(|w| w.visibility),
    )?
    .with_calendar(calendar);
    let t_len = covariates.t_len();

    let mut out = Vec::with_capacity(events.len());
    for raw in events {
        let t = match raw.t {
            EventTime::Date(d) => match calendar.day_index(d) {
                Some(i) => i as f64,
                None => continue,
            },
            EventTime::Day(d) => d,
        };
        let e = Event {
            x: raw.x,
            y: raw.y,
            t,
            k: raw.k,
        };
        validate_event(&e, window, t_len)
            .map_err(|m| Error::InvalidParameter(format!("event on line {}: {m}", raw.line)))?;
        out.push(e);
    }
    Ok((
        covariates,
        EventPattern {
            events: out,
            window: window.clone(),
            t_len,
        },
    ))
}

/// Writes weather with dates from the covariates' calendar (or day indices).
pub fn format_weather(cov: &TemporalCovariates) -> String {
    let mut header = vec!["date", "wind_speed", "temperature", "wind_chill"];
    if cov.sunshine.is_some() {
        header.push("sunshine");
    }
    if cov.visibility.is_some() {
        header.push("visibility");
    }
    let mut out = header.join(",");
    out.push('\n');
    for t in 0..cov.t_len() {
        let date = match cov.calendar {
            Some(c) => c.date_of(t as i64).format("%Y-%m-%d").to_string(),
            None => t.to_string(),
        };
        let mut row = vec![
            date,
            fmt_f64(cov.wind_speed[t]),
            fmt_f64(cov.temperature[t]),
            fmt_f64(cov.wind_chill[t]),
        ];
        if let Some(s) = &cov.sunshine {
            row.push(fmt_f64(s[t]));
        }
        if let Some(v) = &cov.visibility {
            row.push(fmt_f64(v[t]));
        }
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn write_weather(path: impl AsRef<Path>, cov: &TemporalCovariates) -> Result<()> {
    write_atomic(path.as_ref(), format_weather(cov).as_bytes())
}

/// Reads a weather file and removes leap days.
pub fn load_weather(path: impl AsRef<Path>, window: &SpatialGrid) -> Result<TemporalCovariates> {
    let records = read_weather(path)?;
    drop_leap_days(&records, &[], window).map(|(c, _)| c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn window() -> SpatialGrid {
        SpatialGrid::new(10, 10, 0.0, 0.0, 100.0).unwrap()
    }

    fn tmp_file(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    fn date(y: i32, m: u32, d: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(y, m, d).unwrap()
    }

    #[test]
    fn parses_valid_rows() {
        let f = tmp_file("x,y,t,k\n10,20,0,1\n500.5,900,3.5,4\n999,0,9,2\n");
        let p = parse_events(f.path(), &window(), 10).unwrap();
        assert_eq!(p.len(), 3);
        assert_eq!(p.events()[1].k, 4);
    }

    #[test]
    fn bad_house_type_names_the_row() {
        let f = tmp_file("x,y,t,k\n10,20,0,1\n10,20,0,5\n");
        let err = parse_events(f.path(), &window(), 10).unwrap_err().to_string();
        assert!(err.contains(":3:"), "{err}");
        assert!(err.contains("house type 5"), "{err}");
    }

    #[test]
    fn header_only_is_empty() {
        let f = tmp_file("x,y,t,k\n");
        assert!(parse_events(f.path(), &window(), 10).unwrap().is_empty());
    }

    #[test]
    fn out_of_window_and_malformed_rows_fail() {
        let f = tmp_file("x,y,t,k\n1500,20,0,1\n");
        assert!(parse_events(f.path(), &window(), 10).is_err());
        let f = tmp_file("x,y,t,k\n10,20,12,1\n");
        assert!(parse_events(f.path(), &window(), 10).is_err());
        let f = tmp_file("x,y,t,k\n10,abc,1,1\n");
        let err = parse_events(f.path(), &window(), 10).unwrap_err().to_string();
        assert!(err.contains(":2:"), "{err}");
    }

    #[test]
    fn events_round_trip_exactly() {
        let events = vec![
            Event { x: 0.1 + 0.2, y: 333.333_333_333_333_3, t: 1.0 / 3.0, k: 2 },
            Event { x: 999.999_999_999, y: 1e-300, t: 9.0, k: 4 },
        ];
        let p = EventPattern::new(events, &window(), 10).unwrap();
        let f = tmp_file(&format_events(&p));
        let back = parse_events(f.path(), &window(), 10).unwrap();
        assert_eq!(back, p);
    }

    #[test]
    fn wind_chill_values() {
        assert_eq!(compute_wind_chill(0.0, 0.0).unwrap(), 0.0);
        let a = compute_wind_chill(20.0, 0.0).unwrap();
        assert!((a - (13.12 - 11.37 * 20f64.powf(0.16))).abs() < 1e-12);
        // Reference values evaluated independently in double precision.
        assert!((a - -5.242223279780932).abs() < 1e-12, "{a}");
        let b = compute_wind_chill(4.8, 10.0).unwrap();
        assert!((b - 9.817483008282995).abs() < 1e-12, "{b}");
        assert!(compute_wind_chill(-1.0, 0.0).is_err());
    }

    #[test]
    fn calendar_indices() {
        let cal = NoLeapCalendar::new(date(2004, 1, 1)).unwrap();
        assert_eq!(cal.day_index(date(2004, 2, 28)), Some(58));
        assert_eq!(cal.day_index(date(2004, 2, 29)), None);
        assert_eq!(cal.day_index(date(2004, 3, 1)), Some(59));
        assert_eq!(cal.day_index(date(2005, 1, 1)), Some(365));
        assert_eq!(cal.prediction_index(date(2008, 2, 29)), cal.day_index(date(2008, 2, 28)).unwrap());
        for i in 0..3000 {
            assert_eq!(cal.day_index(cal.date_of(i)), Some(i));
        }
    }

    fn weather_rows(from: NaiveDate, to: NaiveDate) -> Vec<WeatherRecord> {
        from.iter_days()
            .take_while(|d| *d <= to)
            .map(|d| WeatherRecord {
                date: d,
                wind_speed: 10.0,
                temperature: d.ordinal() as f64 / 10.0,
                wind_chill: None,
                sunshine: Some(1.0),
                visibility: None,
            })
            .collect()
    }

    #[test]
    fn leap_days_are_dropped() {
        let w = weather_rows(date(2004, 1, 1), date(2005, 12, 31));
        assert_eq!(w.len(), 731);
        let ev = [
            RawEvent { x: 1.0, y: 1.0, t: EventTime::Date(date(2004, 2, 29)), k: 1, line: 2 },
            RawEvent { x: 1.0, y: 1.0, t: EventTime::Date(date(2004, 3, 1)), k: 1, line: 3 },
        ];
        let (cov, pat) = drop_leap_days(&w, &ev, &window()).unwrap();
        assert_eq!(cov.t_len(), 730);
        assert_eq!(cov.t_len() % 365, 0);
        assert_eq!(pat.len(), 1);
        assert_eq!(pat.events()[0].t, 59.0);
        // March 1 2004 follows Feb 28 directly.
        assert_eq!(cov.temperature[59], date(2004, 3, 1).ordinal() as f64 / 10.0);
        assert!(cov.sunshine.is_some() && cov.visibility.is_none());
        assert!((cov.wind_chill[0] - compute_wind_chill(10.0, 0.1).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn non_leap_input_is_identity() {
        let w = weather_rows(date(2005, 1, 1), date(2005, 12, 31));
        let (cov, _) = drop_leap_days(&w, &[], &window()).unwrap();
        assert_eq!(cov.t_len(), 365);
        assert!(cov.temperature.iter().zip(&w).all(|(a, r)| *a == r.temperature));
    }

    #[test]
    fn duplicate_and_gapped_dates_fail() {
        let mut w = weather_rows(date(2005, 1, 1), date(2005, 1, 10));
        w.push(w[3].clone());
        assert!(drop_leap_days(&w, &[], &window()).is_err());
        let mut w = weather_rows(date(2005, 1, 1), date(2005, 1, 10));
        w.remove(4);
        assert!(drop_leap_days(&w, &[], &window()).is_err());
    }

    #[test]
    fn weather_file_round_trip() {
        let w = weather_rows(date(2007, 12, 25), date(2008, 3, 5));
        let (cov, _) = drop_leap_days(&w, &[], &window()).unwrap();
        let f = tmp_file(&format_weather(&cov));
        let back = load_weather(f.path(), &window()).unwrap();
        assert_eq!(back, cov);
    }

    #[test]
    fn dated_events_drop_feb_29() {
        let f = tmp_file("x,y,t,k\n5,5,2008-02-29,1\n5,5,2008-03-01,2\n5,5,3,3\n");
        let cal = NoLeapCalendar::new(date(2008, 1, 1)).unwrap();
        let (p, dropped) = parse_events_dated(f.path(), &window(), 365, cal).unwrap();
        assert_eq!(dropped, 1);
        assert_eq!(p.len(), 2);
        assert_eq!(p.events()[0].t, 59.0);
    }
}
