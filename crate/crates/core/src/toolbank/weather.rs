//! Historical weather lookup for a city and date.
//!
//! Action Input: `City, YYYY-MM-DD[, aspect]`, aspect defaulting to
//! `overall weather`. Live mode queries a weatherapi.com-compatible
//! `history.json` endpoint.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::calendar::CivilDate;
use super::{
    format_number, normalize_input, sanitize_observation, ErrorKind, Tool, ToolResult, ToolSpec,
    TOOL_FAILURE_MESSAGE, WEATHER,
};

pub const ASPECTS: [&str; 7] = [
    "overall weather",
    "temperature",
    "precipitation",
    "humidity",
    "wind speed",
    "visibility",
    "UV index",
];

/// Condition values used for the overall-weather aspect.
pub const CONDITIONS: [&str; 10] = [
    "Sunny",
    "Partly cloudy",
    "Cloudy",
    "Overcast",
    "Mist",
    "Raining",
    "Light rain",
    "Heavy rain",
    "Thunderstorm",
    "Snow",
];

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct WeatherConfig {
    /// Base URL, e.g. `https://api.weatherapi.com/v1`.
    pub endpoint: Option<String>,
    pub api_key: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WeatherQuery {
    pub city: String,
    pub date: CivilDate,
    pub aspect: String,
}

/// Canonical aspect spelling, matched case-insensitively.
pub fn canonical_aspect(aspect: &str) -> Option<&'static str> {
    let a = normalize_input(aspect);
    ASPECTS.iter().copied().find(|k| k.eq_ignore_ascii_case(&a))
}

impl WeatherQuery {
    pub fn new(city: &str, date: CivilDate, aspect: &str) -> Result<Self, String> {
        let city = normalize_input(city);
        if city.is_empty() {
            return Err("Missing city.".to_string());
        }
        let aspect = canonical_aspect(aspect).ok_or_else(|| {
            format!(
                "Unsupported weather aspect '{}'. Supported: {}.",
                aspect.trim(),
                ASPECTS.join(", ")
            )
        })?;
        Ok(Self {
            city,
            date,
            aspect: aspect.to_string(),
        })
    }

    pub fn parse(input: &str) -> Result<Self, String> {
        let fields: Vec<&str> = input.split(',').map(str::trim).collect();
        let date_at = fields
            .iter()
            .rposition(|f| f.parse::<CivilDate>().is_ok())
            .ok_or_else(|| format!("No YYYY-MM-DD date in weather request '{}'.", input.trim()))?;
        let city = fields[..date_at].join(", ");
        let aspect = if date_at + 1 < fields.len() {
            fields[date_at + 1..].join(", ")
        } else {
            ASPECTS[0].to_string()
        };
        let date = fields[date_at].parse().expect("checked above");
        Self::new(&city, date, &aspect)
    }

    pub fn to_input(&self) -> String {
        format!("{}, {}, {}", self.city, self.date, self.aspect)
    }

    /// Key under which the dispatcher stores this query's fixture.
    pub fn fixture_key(&self) -> String {
        self.to_input().to_lowercase()
    }
}

/// Picks the aspect's value out of a weatherapi.com history response.
pub fn extract_aspect(body: &Value, aspect: &str) -> Option<String> {
    let day = body.pointer("/forecast/forecastday/0/day")?;
    let num = |field: &str| day.get(field).and_then(Value::as_f64);
    Some(match aspect {
        "overall weather" => day.pointer("/condition/text")?.as_str()?.trim().to_string(),
        "temperature" => format!("{}°C", format_number(num("avgtemp_c")?)),
        "precipitation" => format!("{} mm", format_number(num("totalprecip_mm")?)),
        "humidity" => format!("{}%", format_number(num("avghumidity")?)),
        "wind speed" => format!("{} km/h", format_number(num("maxwind_kph")?)),
        "visibility" => format!("{} km", format_number(num("avgvis_km")?)),
        "UV index" => format_number(num("uv")?),
        _ => return None,
    })
    .filter(|s| !s.is_empty())
}

/// Plausible wrong values for an aspect, excluding `observed`. Numeric
/// aspects are perturbed around the observed number and keep its unit.
pub fn perturbation_candidates(aspect: &str, observed: &str) -> Vec<String> {
    if aspect == "overall weather" {
        return CONDITIONS
            .iter()
            .filter(|c| !c.eq_ignore_ascii_case(observed.trim()))
            .map(|c| c.to_string())
            .collect();
    }
    let observed = observed.trim();
    let split = observed
        .find(|c: char| !(c.is_ascii_digit() || c == '.' || c == '-'))
        .unwrap_or(observed.len());
    let Ok(value) = observed[..split].parse::<f64>() else {
        return Vec::new();
    };
    let unit = &observed[split..];
    let (deltas, lo, hi): (&[f64], f64, f64) = match aspect {
        "temperature" => (&[-12.0, -8.0, -5.0, -3.0, 3.0, 5.0, 8.0, 12.0], -90.0, 60.0),
        "precipitation" => (&[-5.0, -2.0, -1.0, 1.0, 2.0, 5.0, 10.0], 0.0, 500.0),
        "humidity" => (&[-30.0, -20.0, -10.0, 10.0, 20.0, 30.0], 0.0, 100.0),
        "wind speed" => (&[-10.0, -5.0, -3.0, 3.0, 5.0, 10.0, 20.0], 0.0, 400.0),
        "visibility" => (&[-5.0, -3.0, -1.0, 1.0, 3.0, 5.0], 0.0, 100.0),
        "UV index" => (&[-4.0, -2.0, -1.0, 1.0, 2.0, 4.0], 0.0, 15.0),
        _ => return Vec::new(),
    };
    deltas
        .iter()
        .map(|d| value + d)
        .filter(|v| (lo..=hi).contains(v))
        .map(|v| format!("{}{}", format_number(v), unit))
        .filter(|s| s != observed)
        .collect()
}

pub struct WeatherTool {
    spec: ToolSpec,
    cfg: WeatherConfig,
    http: reqwest::blocking::Client,
}

impl WeatherTool {
    pub fn new(cfg: WeatherConfig, http: reqwest::blocking::Client) -> Self {
        Self {
            spec: ToolSpec {
                name: WEATHER.to_string(),
                arg_grammar: format!("City, YYYY-MM-DD[, aspect] with aspect in: {}", ASPECTS.join(", ")),
                requires_network: true,
            },
            cfg,
            http,
        }
    }

    /// Live lookup for a validated query.
    pub fn weather_lookup(&self, q: &WeatherQuery) -> ToolResult {
        let Some(endpoint) = &self.cfg.endpoint else {
            return ToolResult::error(ErrorKind::NetworkError, TOOL_FAILURE_MESSAGE);
        };
        let url = format!("{}/history.json", endpoint.trim_end_matches('/'));
        let date = q.date.to_string();
        let mut params = vec![("q", q.city.as_str()), ("dt", date.as_str())];
        if let Some(key) = &self.cfg.api_key {
            params.push(("key", key.as_str()));
        }
        let resp = match self.http.get(&url).query(&params).send() {
            Ok(r) => r,
            Err(e) if e.is_timeout() => {
                return ToolResult::error(ErrorKind::Timeout, TOOL_FAILURE_MESSAGE)
            }
            Err(_) => return ToolResult::error(ErrorKind::NetworkError, TOOL_FAILURE_MESSAGE),
        };
        if !resp.status().is_success() {
            return ToolResult::error(ErrorKind::NetworkError, TOOL_FAILURE_MESSAGE);
        }
        let body: Value = match resp.json() {
            Ok(v) => v,
            Err(_) => {
                return ToolResult::error(
                    ErrorKind::ExecutionError,
                    "The weather service returned an unreadable response.",
                )
            }
        };
        match extract_aspect(&body, &q.aspect) {
            Some(v) => ToolResult::ok(sanitize_observation(&v, 256)),
            None => ToolResult::error(
                ErrorKind::ExecutionError,
                format!("The weather service response has no {} value.", q.aspect),
            ),
        }
    }
}

impl Tool for WeatherTool {
    fn spec(&self) -> &ToolSpec {
        &self.spec
    }

    fn fixture_key(&self, raw_input: &str) -> Result<String, ToolResult> {
        WeatherQuery::parse(raw_input)
            .map(|q| q.fixture_key())
            .map_err(ToolResult::invalid)
    }

    fn execute(&self, raw_input: &str) -> ToolResult {
        match WeatherQuery::parse(raw_input) {
            Ok(q) => self.weather_lookup(&q),
            Err(msg) => ToolResult::invalid(msg),
        }
    }
}
