//! Scenario files: a line-oriented `key = value` format with `[section]`
//! headers and `#` comments. Unknown sections and keys are rejected, and
//! every parse error carries its line number.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use tiermenu::solver::{CapacityRegime, CostFunction};
use tiermenu::{NumericsConfig, QualityModel, ValuationDistribution, VirtualFunctions};

#[derive(Debug)]
pub struct ParseError {
    pub line: usize,
    pub message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.line > 0 {
            write!(f, "line {}: {}", self.line, self.message)
        } else {
            write!(f, "{}", self.message)
        }
    }
}

impl std::error::Error for ParseError {}

fn err(line: usize, message: impl Into<String>) -> ParseError {
    ParseError {
        line,
        message: message.into(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PricingMode {
    Flat,
    Payg,
}

#[derive(Clone, Debug)]
pub enum DistSpec {
    Power { alpha: f64 },
}

#[derive(Clone, Debug)]
pub enum QualitySpec {
    Canonical,
}

#[derive(Clone, Debug)]
pub enum CostSpec {
    Linear { rate: f64 },
    FlatThenQuadratic { base: f64, steepness: f64 },
}

#[derive(Clone, Debug)]
pub enum RegimeSpec {
    Fixed { max_capacity: f64 },
    Variable { cost: CostSpec },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Artifact {
    Summary,
    PriceSchedule,
    ChoiceSchedule,
    SurplusCurve,
    CapacityProfile,
}

impl Artifact {
    fn parse(s: &str, line: usize) -> Result<Self, ParseError> {
        match s {
            "summary" => Ok(Artifact::Summary),
            "price-schedule" => Ok(Artifact::PriceSchedule),
            "choice-schedule" => Ok(Artifact::ChoiceSchedule),
            "surplus-curve" => Ok(Artifact::SurplusCurve),
            "capacity-profile" => Ok(Artifact::CapacityProfile),
            other => Err(err(line, format!("unknown artifact `{other}`"))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct SearchSpec {
    pub classes: usize,
    pub resolution: usize,
}

#[derive(Clone, Debug)]
pub struct Scenario {
    pub distribution: DistSpec,
    pub quality: QualitySpec,
    pub pricing: PricingMode,
    pub regime: RegimeSpec,
    pub numerics: NumericsConfig,
    pub artifacts: Vec<Artifact>,
    pub single_class_benchmark: bool,
    pub menu: Vec<(f64, f64)>,
    pub search: Option<SearchSpec>,
}

impl Scenario {
    pub fn from_path(path: &Path) -> Result<Scenario, ParseError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| err(0, format!("cannot read {}: {e}", path.display())))?;
        Scenario::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Scenario, ParseError> {
        let mut section = String::new();
        let mut seen: BTreeSet<String> = BTreeSet::new();

        let mut dist_kind: Option<String> = None;
        let mut alpha: Option<f64> = None;
        let mut quality_kind: Option<String> = None;
        let mut pricing = PricingMode::Flat;
        let mut regime_kind: Option<String> = None;
        let mut c_m: Option<f64> = None;
        let mut cost_kind: Option<String> = None;
        let mut base: Option<f64> = None;
        let mut steepness: Option<f64> = None;
        let mut rate: Option<f64> = None;
        let mut numerics = NumericsConfig::default();
        let mut artifacts: Option<Vec<Artifact>> = None;
        let mut single_class = false;
        let mut menu: Vec<(f64, f64)> = Vec::new();
        let mut search_k: Option<usize> = None;
        let mut search_res: Option<usize> = None;

        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[') {
                let name = name
                    .strip_suffix(']')
                    .ok_or_else(|| err(line_no, "unterminated section header"))?
                    .trim();
                match name {
                    "distribution" | "quality" | "pricing" | "regime" | "numerics"
                    | "outputs" | "menu" | "search" => section = name.to_string(),
                    other => return Err(err(line_no, format!("unknown section `[{other}]`"))),
                }
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(line_no, format!("expected `key = value`, got `{line}`")))?;
            let key = key.trim();
            let value = value.trim();
            if section.is_empty() {
                return Err(err(line_no, "key outside of any [section]"));
            }
            let qualified = format!("{section}.{key}");
            if !(section == "menu" && key == "class") && !seen.insert(qualified.clone()) {
                return Err(err(line_no, format!("duplicate key `{key}` in [{section}]")));
            }

            let parse_f64 = |v: &str| -> Result<f64, ParseError> {
                v.parse::<f64>()
                    .map_err(|_| err(line_no, format!("`{v}` is not a number")))
            };
            let parse_usize = |v: &str| -> Result<usize, ParseError> {
                v.parse::<usize>()
                    .map_err(|_| err(line_no, format!("`{v}` is not a count")))
            };

            match (section.as_str(), key) {
                ("distribution", "kind") => dist_kind = Some(value.to_string()),
                ("distribution", "alpha") => alpha = Some(parse_f64(value)?),
                ("quality", "kind") => quality_kind = Some(value.to_string()),
                ("pricing", "mode") => {
                    pricing = match value {
                        "flat" => PricingMode::Flat,
                        "payg" => PricingMode::Payg,
                        other => {
                            return Err(err(
                                line_no,
                                format!("pricing mode must be flat or payg, got `{other}`"),
                            ))
                        }
                    }
                }
                ("regime", "kind") => regime_kind = Some(value.to_string()),
                ("regime", "c_m") => c_m = Some(parse_f64(value)?),
                ("regime", "cost") => cost_kind = Some(value.to_string()),
                ("regime", "base") => base = Some(parse_f64(value)?),
                ("regime", "t") => steepness = Some(parse_f64(value)?),
                ("regime", "rate") => rate = Some(parse_f64(value)?),
                ("numerics", "quad_tol") => numerics.quad_tol = parse_f64(value)?,
                ("numerics", "root_tol") => numerics.root_tol = parse_f64(value)?,
                ("numerics", "grid") => numerics.grid = parse_usize(value)?,
                ("numerics", "oracle_grid") => numerics.oracle_grid = parse_usize(value)?,
                ("outputs", "artifacts") => {
                    let mut list = Vec::new();
                    for item in value.split(',') {
                        list.push(Artifact::parse(item.trim(), line_no)?);
                    }
                    artifacts = Some(list);
                }
                ("outputs", "single_class") => {
                    single_class = match value {
                        "true" => true,
                        "false" => false,
                        other => {
                            return Err(err(
                                line_no,
                                format!("single_class must be true or false, got `{other}`"),
                            ))
                        }
                    }
                }
                ("menu", "class") => {
                    let parts: Vec<&str> = value.split_whitespace().collect();
                    if parts.len() != 2 {
                        return Err(err(line_no, "class takes `<price> <congestion>`"));
                    }
                    menu.push((parse_f64(parts[0])?, parse_f64(parts[1])?));
                }
                ("search", "k") => search_k = Some(parse_usize(value)?),
                ("search", "resolution") => search_res = Some(parse_usize(value)?),
                (section, key) => {
                    return Err(err(line_no, format!("unknown key `{key}` in [{section}]")))
                }
            }
        }

        let distribution = match dist_kind.as_deref() {
            Some("power") => {
                let alpha =
                    alpha.ok_or_else(|| err(0, "[distribution] alpha is required for power"))?;
                if !(alpha > 0.0) {
                    return Err(err(0, format!("alpha must be positive, got {alpha}")));
                }
                DistSpec::Power { alpha }
            }
            Some(other) => return Err(err(0, format!("unknown distribution kind `{other}`"))),
            None => return Err(err(0, "missing [distribution] section with kind")),
        };
        let quality = match quality_kind.as_deref() {
            Some("canonical") => QualitySpec::Canonical,
            Some(other) => return Err(err(0, format!("unknown quality kind `{other}`"))),
            None => return Err(err(0, "missing [quality] section with kind")),
        };
        let regime = match regime_kind.as_deref() {
            Some("fixed") => {
                let c = c_m.ok_or_else(|| err(0, "[regime] c_m is required for fixed"))?;
                if !(c > 0.0) {
                    return Err(err(0, format!("c_m must be positive, got {c}")));
                }
                RegimeSpec::Fixed { max_capacity: c }
            }
            Some("variable") => {
                let cost = match cost_kind.as_deref() {
                    Some("flat-then-quadratic") => CostSpec::FlatThenQuadratic {
                        base: base.ok_or_else(|| err(0, "[regime] base is required"))?,
                        steepness: steepness.ok_or_else(|| err(0, "[regime] t is required"))?,
                    },
                    Some("linear") => CostSpec::Linear {
                        rate: rate.ok_or_else(|| err(0, "[regime] rate is required"))?,
                    },
                    Some(other) => return Err(err(0, format!("unknown cost family `{other}`"))),
                    None => return Err(err(0, "[regime] cost is required for variable")),
                };
                RegimeSpec::Variable { cost }
            }
            Some(other) => return Err(err(0, format!("unknown regime kind `{other}`"))),
            None => return Err(err(0, "missing [regime] section with kind")),
        };
        numerics
            .validate()
            .map_err(|e| err(0, format!("invalid [numerics]: {e}")))?;
        let search = match (search_k, search_res) {
            (None, None) => None,
            (k, r) => Some(SearchSpec {
                classes: k.unwrap_or(4),
                resolution: r.unwrap_or(32),
            }),
        };

        Ok(Scenario {
            distribution,
            quality,
            pricing,
            regime,
            numerics,
            artifacts: artifacts.unwrap_or_else(|| {
                vec![
                    Artifact::Summary,
                    Artifact::PriceSchedule,
                    Artifact::ChoiceSchedule,
                ]
            }),
            single_class_benchmark: single_class,
            menu,
            search,
        })
    }

    pub fn build_distribution(&self) -> tiermenu::Result<ValuationDistribution> {
        match self.distribution {
            DistSpec::Power { alpha } => ValuationDistribution::power(alpha),
        }
    }

    /// The quality model with the pay-as-you-go transform applied when the
    /// pricing mode asks for it.
    pub fn build_quality(&self) -> tiermenu::Result<QualityModel> {
        let base = match self.quality {
            QualitySpec::Canonical => QualityModel::canonical(),
        };
        match self.pricing {
            PricingMode::Flat => Ok(base),
            PricingMode::Payg => base.payg_transform(),
        }
    }

    pub fn build_virtuals(&self) -> tiermenu::Result<VirtualFunctions> {
        VirtualFunctions::derive_with(
            self.build_distribution()?,
            self.build_quality()?,
            self.numerics,
        )
    }

    pub fn build_regime(&self) -> tiermenu::Result<CapacityRegime> {
        Ok(match &self.regime {
            RegimeSpec::Fixed { max_capacity } => CapacityRegime::Fixed {
                max_capacity: *max_capacity,
            },
            RegimeSpec::Variable { cost } => CapacityRegime::Variable {
                cost: match cost {
                    CostSpec::Linear { rate } => CostFunction::linear(*rate)?,
                    CostSpec::FlatThenQuadratic { base, steepness } => {
                        CostFunction::flat_then_quadratic(*base, *steepness)?
                    }
                },
            },
        })
    }
}
