//! Sessionization of Avazu-style click logs.
//!
//! The logs carry no dwell measurement, so each event's dwell label is the
//! gap to the next event of the same session, capped at `gap_cap_s`. The
//! last event of a session has no successor and is dropped.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::event::{FeatureLayout, InteractionEvent, Session};
use super::hash::fnv1a;
use crate::error::{Error, Result};

/// Column names for the fields the ingester reads.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AvazuSchema {
    pub hour: String,
    pub banner_pos: String,
    pub site_category: String,
    pub device_type: String,
    pub device_conn_type: String,
    pub click: String,
    pub device_id: String,
    pub device_ip: String,
}

impl Default for AvazuSchema {
    fn default() -> Self {
        AvazuSchema {
            hour: "hour".into(),
            banner_pos: "banner_pos".into(),
            site_category: "site_category".into(),
            device_type: "device_type".into(),
            device_conn_type: "device_conn_type".into(),
            click: "click".into(),
            device_id: "device_id".into(),
            device_ip: "device_ip".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionKey {
    DeviceId,
    DeviceIp,
}

impl std::str::FromStr for SessionKey {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "device_id" => Ok(SessionKey::DeviceId),
            "device_ip" => Ok(SessionKey::DeviceIp),
            other => Err(Error::config(
                "data.session_key",
                format!("`{other}` is not device_id or device_ip"),
            )),
        }
    }
}

#[derive(Debug, Clone)]
pub struct IngestOptions {
    pub schema: AvazuSchema,
    pub session_key: SessionKey,
    pub gap_cap_s: f64,
    pub layout: FeatureLayout,
    pub skip_bad_rows: bool,
}

impl IngestOptions {
    pub fn new(layout: FeatureLayout) -> Self {
        IngestOptions {
            schema: AvazuSchema::default(),
            session_key: SessionKey::DeviceId,
            gap_cap_s: 1800.0,
            layout,
            skip_bad_rows: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct IngestOutput {
    /// Sessions in ascending key order; sessions left empty are omitted.
    pub sessions: Vec<Session>,
    pub rows_read: usize,
    pub rows_skipped: usize,
}

impl IngestOutput {
    pub fn labeled_events(&self) -> usize {
        self.sessions.iter().map(|s| s.events.len()).sum()
    }
}

struct Columns {
    hour: usize,
    banner_pos: usize,
    site_category: usize,
    device_type: usize,
    device_conn_type: usize,
    click: usize,
    key: usize,
}

struct Row {
    timestamp: i64,
    click: u32,
    banner_pos: f64,
    category: u32,
    device: u32,
}

pub fn ingest_avazu_csv(path: impl AsRef<Path>, opts: &IngestOptions) -> Result<IngestOutput> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    ingest_avazu_reader(file, opts)
}

pub fn ingest_avazu_reader<R: std::io::Read>(reader: R, opts: &IngestOptions) -> Result<IngestOutput> {
    if !(opts.gap_cap_s > 0.0) {
        return Err(Error::config("ingest.gap_cap_s", "must be positive"));
    }
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::data("line 1", format!("unreadable header: {e}")))?
        .clone();
    let find = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::Schema {
                column: name.to_string(),
            })
    };
    let s = &opts.schema;
    let cols = Columns {
        hour: find(&s.hour)?,
        banner_pos: find(&s.banner_pos)?,
        site_category: find(&s.site_category)?,
        device_type: find(&s.device_type)?,
        device_conn_type: find(&s.device_conn_type)?,
        click: find(&s.click)?,
        key: match opts.session_key {
            SessionKey::DeviceId => find(&s.device_id)?,
            SessionKey::DeviceIp => find(&s.device_ip)?,
        },
    };

    let mut groups: BTreeMap<String, Vec<Row>> = BTreeMap::new();
    let mut rows_read = 0;
    let mut rows_skipped = 0;
    for rec in rdr.records() {
        let parsed = rec
            .map_err(|e| {
                let line = e.position().map_or(0, |p| p.line());
                Error::data(format!("line {line}"), e.to_string())
            })
            .and_then(|rec| {
                let line = rec.position().map_or(0, |p| p.line());
                parse_row(&rec, &cols, &opts.layout)
                    .map(|row| (rec[cols.key].to_string(), row))
                    .map_err(|msg| Error::data(format!("line {line}"), msg))
            });
        match parsed {
            Ok((key, row)) => {
                rows_read += 1;
                groups.entry(key).or_default().push(row);
            }
            Err(_) if opts.skip_bad_rows => rows_skipped += 1,
            Err(e) => return Err(e),
        }
    }

    let cap_ms = opts.gap_cap_s * 1000.0;
    let mut sessions = Vec::new();
    for (key, mut rows) in groups {
        rows.sort_by_key(|r| r.timestamp);
        let events: Vec<InteractionEvent> = rows
            .windows(2)
            .map(|pair| {
                let gap_ms = (pair[1].timestamp - pair[0].timestamp) as f64 * 1000.0;
                let r = &pair[0];
                InteractionEvent {
                    timestamp: r.timestamp,
                    session_id: key.clone(),
                    dwell_ms: gap_ms.min(cap_ms),
                    click_count: r.click,
                    scroll_delta: r.banner_pos,
                    context_category: r.category,
                    device_type: r.device,
                    target_ms: None,
                }
            })
            .collect();
        if !events.is_empty() {
            sessions.push(Session { id: key, events });
        }
    }
    Ok(IngestOutput {
        sessions,
        rows_read,
        rows_skipped,
    })
}

fn parse_row(rec: &csv::StringRecord, cols: &Columns, layout: &FeatureLayout) -> std::result::Result<Row, String> {
    let hour = &rec[cols.hour];
    let timestamp = parse_hour(hour).ok_or_else(|| format!("unparseable hour `{hour}` (expected YYMMDDHH)"))?;
    let int = |idx: usize, name: &str| -> std::result::Result<u32, String> {
        rec[idx]
            .trim()
            .parse::<u32>()
            .map_err(|_| format!("column {name}: `{}` is not a nonnegative integer", &rec[idx]))
    };
    let click = int(cols.click, "click")?;
    let banner_pos = int(cols.banner_pos, "banner_pos")?;
    let device = int(cols.device_type, "device_type")?;
    int(cols.device_conn_type, "device_conn_type")?;
    if device as usize >= layout.devices {
        return Err(format!("device_type {device} outside [0, {})", layout.devices));
    }
    let category = (fnv1a(rec[cols.site_category].trim().as_bytes()) % layout.categories as u64) as u32;
    Ok(Row {
        timestamp,
        click,
        banner_pos: f64::from(banner_pos),
        category,
        device,
    })
}

/// Parses `YYMMDDHH` (years 2000-2099) into Unix seconds, UTC.
pub fn parse_hour(s: &str) -> Option<i64> {
    let s = s.trim();
    if s.len() != 8 || !s.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    let field = |i: usize| s[i..i + 2].parse::<i64>().ok();
    let (yy, mm, dd, hh) = (field(0)?, field(2)?, field(4)?, field(6)?);
    let year = 2000 + yy;
    if !(1..=12).contains(&mm) || hh > 23 || dd < 1 || dd > days_in_month(year, mm) {
        return None;
    }
    Some(days_from_civil(year, mm, dd) * 86_400 + hh * 3600)
}

fn days_in_month(y: i64, m: i64) -> i64 {
    match m {
        4 | 6 | 9 | 11 => 30,
        2 if (y % 4 == 0 && y % 100 != 0) || y % 400 == 0 => 29,
        2 => 28,
        _ => 31,
    }
}

// Days since 1970-01-01 for a proleptic Gregorian date.
fn days_from_civil(y: i64, m: i64, d: i64) -> i64 {
    let y = if m <= 2 { y - 1 } else { y };
    let era = y.div_euclid(400);
    let yoe = y - era * 400;
    let mp = (m + 9) % 12;
    let doy = (153 * mp + 2) / 5 + d - 1;
    let doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    era * 146_097 + doe - 719_468
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "id,click,hour,banner_pos,site_category,device_id,device_ip,device_type,device_conn_type";

    fn opts() -> IngestOptions {
        IngestOptions::new(FeatureLayout::new(4, 6).unwrap())
    }

    fn ingest(body: &str) -> Result<IngestOutput> {
        ingest_avazu_reader(format!("{HEADER}\n{body}").as_bytes(), &opts())
    }

    #[test]
    fn hour_parsing() {
        // 2014-10-21 00:00 UTC
        assert_eq!(parse_hour("14102100"), Some(1_413_849_600));
        assert_eq!(parse_hour("14102101"), Some(1_413_849_600 + 3600));
        assert_eq!(parse_hour("14022900"), None);
        assert_eq!(parse_hour("16022900"), Some(1_456_704_000));
        assert_eq!(parse_hour("1410210"), None);
        assert_eq!(parse_hour("14132100"), None);
    }

    #[test]
    fn two_row_session_caps_gap() {
        let out = ingest(
            "1,0,14102100,0,28905ebd,a99f214a,ddd2926e,1,0\n\
             2,1,14102101,1,28905ebd,a99f214a,ddd2926e,1,0\n",
        )
        .unwrap();
        assert_eq!(out.labeled_events(), 1);
        let e = &out.sessions[0].events[0];
        assert_eq!(e.dwell_ms, 1_800_000.0);
        assert_eq!(e.device_type, 1);
        assert_eq!(e.click_count, 0);
    }

    #[test]
    fn single_row_session_yields_nothing() {
        let out = ingest("1,0,14102100,0,28905ebd,a99f214a,ddd2926e,1,0\n").unwrap();
        assert_eq!(out.labeled_events(), 0);
        assert!(out.sessions.is_empty());
    }

    #[test]
    fn label_count_is_len_minus_one_per_session() {
        let body = "\
1,0,14102103,0,c,k1,ip,1,0
2,0,14102100,0,c,k1,ip,1,0
3,1,14102101,0,c,k2,ip,1,0
4,0,14102101,0,c,k1,ip,1,0
5,0,14102102,0,c,k3,ip,1,0
6,0,14102105,0,c,k3,ip,1,0
7,0,14102106,0,c,k3,ip,1,0
";
        let out = ingest(body).unwrap();
        // k1: 3 rows, k2: 1, k3: 3 -> 2 + 0 + 2
        assert_eq!(out.labeled_events(), 4);
        let k1 = &out.sessions[0];
        assert_eq!(k1.id, "k1");
        // Sorted by hour; gaps of 1h and 2h, both capped.
        assert!(k1.events.windows(2).all(|p| p[0].timestamp <= p[1].timestamp));
        assert!(k1.events.iter().all(|e| e.dwell_ms == 1_800_000.0));
    }

    #[test]
    fn small_gap_not_capped() {
        let mut o = opts();
        o.gap_cap_s = 1e9;
        let out = ingest_avazu_reader(
            format!("{HEADER}\n1,0,14102100,0,c,k,ip,0,0\n2,0,14102102,0,c,k,ip,0,0\n").as_bytes(),
            &o,
        )
        .unwrap();
        assert_eq!(out.sessions[0].events[0].dwell_ms, 7_200_000.0);
    }

    #[test]
    fn missing_column_names_it() {
        let err = ingest_avazu_reader("click,banner_pos\n0,0\n".as_bytes(), &opts()).unwrap_err();
        match err {
            Error::Schema { column } => assert_eq!(column, "hour"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_hour_reports_line() {
        let err = ingest(
            "1,0,14102100,0,c,k,ip,1,0\n\
             2,0,2014-10,0,c,k,ip,1,0\n",
        )
        .unwrap_err();
        let msg = err.to_string();
        assert!(matches!(err, Error::Data { .. }));
        assert!(msg.contains("line 3") && msg.contains("hour"), "{msg}");
    }

    #[test]
    fn skip_bad_rows_counts() {
        let mut o = opts();
        o.skip_bad_rows = true;
        let out = ingest_avazu_reader(
            format!("{HEADER}\n1,0,14102100,0,c,k,ip,1,0\n2,0,bad,0,c,k,ip,1,0\n3,0,14102101,0,c,k,ip,9,0\n4,0,14102101,0,c,k,ip,1,0\n").as_bytes(),
            &o,
        )
        .unwrap();
        assert_eq!(out.rows_skipped, 2);
        assert_eq!(out.rows_read, 2);
        assert_eq!(out.labeled_events(), 1);
    }

    #[test]
    fn category_bucketing_is_stable() {
        let out = ingest(
            "1,0,14102100,0,28905ebd,k,ip,1,0\n\
             2,0,14102101,0,50e219e0,k,ip,1,0\n\
             3,0,14102102,0,f028772b,k,ip,1,0\n",
        )
        .unwrap();
        let cats: Vec<u32> = out.sessions[0].events.iter().map(|e| e.context_category).collect();
        let expect: Vec<u32> = ["28905ebd", "50e219e0"]
            .iter()
            .map(|s| (fnv1a(s.as_bytes()) % 4) as u32)
            .collect();
        assert_eq!(cats, expect);
    }
}
