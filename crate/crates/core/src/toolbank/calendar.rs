//! Date arithmetic on the proleptic Gregorian calendar, timezone-free.
//!
//! Accepted inputs (case-insensitive, commas and parentheses optional):
//! `weekday 2023-06-24`, `diff 2023-06-19 2023-06-25`, `offset 2023-06-20 +5`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{Tool, ToolResult, ToolSpec, CALENDAR};

pub const WEEKDAYS: [&str; 7] = [
    "Monday",
    "Tuesday",
    "Wednesday",
    "Thursday",
    "Friday",
    "Saturday",
    "Sunday",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CivilDate {
    pub year: i32,
    pub month: u32,
    pub day: u32,
}

fn is_leap(y: i32) -> bool {
    (y % 4 == 0 && y % 100 != 0) || y % 400 == 0
}

fn days_in_month(y: i32, m: u32) -> u32 {
    match m {
        1 | 3 | 5 | 7 | 8 | 10 | 12 => 31,
        4 | 6 | 9 | 11 => 30,
        2 if is_leap(y) => 29,
        2 => 28,
        _ => 0,
    }
}

impl CivilDate {
    pub fn new(year: i32, month: u32, day: u32) -> Option<Self> {
        if !(1..=9999).contains(&year) || !(1..=12).contains(&month) {
            return None;
        }
        if day == 0 || day > days_in_month(year, month) {
            return None;
        }
        Some(Self { year, month, day })
    }

    /// Days since 1970-01-01.
    pub fn to_days(self) -> i64 {
        let y = i64::from(self.year) - i64::from(self.month <= 2);
        let era = y.div_euclid(400);
        let yoe = y - era * 400;
        let m = i64::from(self.month);
        let mp = (m + 9) % 12;
        let doy = (153 * mp + 2) / 5 + i64::from(self.day) - 1;
        let doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
        era * 146_097 + doe - 719_468
    }

    pub fn from_days(days: i64) -> Option<Self> {
        let z = days + 719_468;
        let era = z.div_euclid(146_097);
        let doe = z - era * 146_097;
        let yoe = (doe - doe / 1460 + doe / 36_524 - doe / 146_096) / 365;
        let doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
        let mp = (5 * doy + 2) / 153;
        let day = (doy - (153 * mp + 2) / 5 + 1) as u32;
        let month = if mp < 10 { mp + 3 } else { mp - 9 } as u32;
        let year = yoe + era * 400 + i64::from(month <= 2);
        Self::new(i32::try_from(year).ok()?, month, day)
    }

    /// 0 = Monday .. 6 = Sunday.
    pub fn weekday_index(self) -> usize {
        // 1970-01-01 was a Thursday.
        (self.to_days() + 3).rem_euclid(7) as usize
    }

    pub fn weekday(self) -> &'static str {
        WEEKDAYS[self.weekday_index()]
    }

    pub fn add_days(self, n: i64) -> Option<Self> {
        Self::from_days(self.to_days().checked_add(n)?)
    }
}

impl fmt::Display for CivilDate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}-{:02}", self.year, self.month, self.day)
    }
}

impl FromStr for CivilDate {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let bad = || format!("Invalid date '{s}', expected YYYY-MM-DD.");
        let parts: Vec<&str> = s.split('-').collect();
        if parts.len() != 3
            || parts[0].len() != 4
            || parts[1].len() != 2
            || parts[2].len() != 2
            || !parts.iter().all(|p| p.bytes().all(|b| b.is_ascii_digit()))
        {
            return Err(bad());
        }
        let y = parts[0].parse().map_err(|_| bad())?;
        let m = parts[1].parse().map_err(|_| bad())?;
        let d = parts[2].parse().map_err(|_| bad())?;
        CivilDate::new(y, m, d).ok_or_else(bad)
    }
}

impl Serialize for CivilDate {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for CivilDate {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CalendarQuery {
    Weekday(CivilDate),
    Diff(CivilDate, CivilDate),
    Offset(CivilDate, i64),
}

impl CalendarQuery {
    pub fn parse(input: &str) -> Result<Self, String> {
        let tokens: Vec<&str> = input
            .split(|c: char| c.is_whitespace() || c == ',' || c == '(' || c == ')')
            .filter(|t| !t.is_empty())
            .collect();
        let Some((func, args)) = tokens.split_first() else {
            return Err("Empty calendar request.".to_string());
        };
        match (func.to_ascii_lowercase().as_str(), args) {
            ("weekday", [d]) => Ok(Self::Weekday(d.parse()?)),
            ("diff" | "difference", [a, b]) => Ok(Self::Diff(a.parse()?, b.parse()?)),
            ("offset" | "add", [d, n, rest @ ..])
                if rest.is_empty() || matches!(rest, [u] if u.eq_ignore_ascii_case("days") || u.eq_ignore_ascii_case("day")) =>
            {
                let n: i64 = n
                    .trim_start_matches('+')
                    .parse()
                    .map_err(|_| format!("Invalid day count '{n}'."))?;
                Ok(Self::Offset(d.parse()?, n))
            }
            _ => Err(format!(
                "Unsupported calendar request '{}'. Use weekday DATE, diff DATE DATE or offset DATE N.",
                input.trim()
            )),
        }
    }

    /// Canonical Action Input text for this query.
    pub fn to_input(&self) -> String {
        match self {
            Self::Weekday(d) => format!("weekday({d})"),
            Self::Diff(a, b) => format!("diff({a}, {b})"),
            Self::Offset(d, n) => format!("offset({d}, {n:+})"),
        }
    }

    pub fn evaluate(&self) -> Result<String, String> {
        match *self {
            Self::Weekday(d) => Ok(d.weekday().to_string()),
            Self::Diff(a, b) => Ok(render_days((b.to_days() - a.to_days()).abs())),
            Self::Offset(d, n) => d
                .add_days(n)
                .map(|r| r.to_string())
                .ok_or_else(|| "Resulting date is outside 0001-01-01..9999-12-31.".to_string()),
        }
    }
}

pub fn render_days(n: i64) -> String {
    if n == 1 {
        "1 day".to_string()
    } else {
        format!("{n} days")
    }
}

pub fn calendar_execute(input: &str) -> ToolResult {
    match CalendarQuery::parse(input).and_then(|q| q.evaluate()) {
        Ok(s) => ToolResult::ok(s),
        Err(msg) => ToolResult::invalid(msg),
    }
}

#[derive(Debug)]
pub struct CalendarTool {
    spec: ToolSpec,
}

impl CalendarTool {
    pub fn new() -> Self {
        Self {
            spec: ToolSpec {
                name: CALENDAR.to_string(),
                arg_grammar: "weekday(YYYY-MM-DD) | diff(YYYY-MM-DD, YYYY-MM-DD) | offset(YYYY-MM-DD, ±N)"
                    .to_string(),
                requires_network: false,
            },
        }
    }
}

impl Default for CalendarTool {
    fn default() -> Self {
        Self::new()
    }
}

impl Tool for CalendarTool {
    fn spec(&self) -> &ToolSpec {
        &self.spec
    }

    fn execute(&self, raw_input: &str) -> ToolResult {
        calendar_execute(raw_input)
    }
}
