//! Template-based test-case generation with embedded value providers.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::Instance;
use crate::rng;

#[derive(Debug, Deserialize)]
struct Providers {
    first_name: BTreeMap<String, Vec<String>>,
    city: Vec<String>,
    country: Vec<String>,
    email_domain: Vec<String>,
}

fn providers() -> &'static Providers {
    static DATA: OnceLock<Providers> = OnceLock::new();
    DATA.get_or_init(|| {
        serde_json::from_str(include_str!("../../data/providers.json")).expect("embedded providers parse")
    })
}

/// Source of values for one template slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum Provider {
    /// One of `first_name`, `city`, `country`, `email`. `locale` selects the
    /// first-name list; without it all locales are pooled.
    Builtin {
        name: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        locale: Option<String>,
    },
    List {
        values: Vec<String>,
    },
    /// Integers in `lo..=hi`.
    IntRange {
        lo: i64,
        hi: i64,
    },
}

impl Provider {
    fn builtin(name: &str) -> Option<Provider> {
        match name {
            "first_name" | "city" | "country" | "email" => Some(Provider::Builtin {
                name: name.to_owned(),
                locale: None,
            }),
            _ => None,
        }
    }

    fn values(&self) -> Result<Vec<String>> {
        let p = providers();
        let out = match self {
            Provider::Builtin { name, locale } => match (name.as_str(), locale) {
                ("first_name", Some(l)) => p
                    .first_name
                    .get(l)
                    .cloned()
                    .ok_or_else(|| Error::invalid(format!("no first names for locale `{l}`")))?,
                ("first_name", None) => p.first_name.values().flatten().cloned().collect(),
                ("city", _) => p.city.clone(),
                ("country", _) => p.country.clone(),
                ("email", _) => Vec::new(),
                (other, _) => return Err(Error::invalid(format!("unknown built-in provider `{other}`"))),
            },
            Provider::List { values } => values.clone(),
            Provider::IntRange { lo, hi } => {
                if lo > hi {
                    return Err(Error::invalid(format!("empty range {lo}..={hi}")));
                }
                return Ok(Vec::new());
            }
        };
        if out.is_empty() && !self.is_email() {
            return Err(Error::invalid("provider has no values"));
        }
        Ok(out)
    }

    fn is_email(&self) -> bool {
        matches!(self, Provider::Builtin { name, .. } if name == "email")
    }

    fn draw(&self, values: &[String], rng: &mut impl Rng) -> String {
        match self {
            Provider::IntRange { lo, hi } => rng.random_range(*lo..=*hi).to_string(),
            _ if self.is_email() => {
                let p = providers();
                let names: Vec<&String> = p.first_name.values().flatten().collect();
                let name = names.choose(rng).expect("names present");
                let domain = p.email_domain.choose(rng).expect("domains present");
                format!("{}@{domain}", name.to_lowercase())
            }
            _ => values.choose(rng).expect("nonempty provider").clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Template {
    /// Text with `{slot}` placeholders.
    pub pattern: String,
    #[serde(default)]
    pub providers: BTreeMap<String, Provider>,
    /// Expected label attached to every generated instance.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected: Option<String>,
}

impl Template {
    pub fn new(pattern: impl Into<String>) -> Self {
        Template {
            pattern: pattern.into(),
            providers: BTreeMap::new(),
            expected: None,
        }
    }

    pub fn with_list(mut self, slot: &str, values: &[&str]) -> Self {
        self.providers.insert(
            slot.to_owned(),
            Provider::List {
                values: values.iter().map(|v| v.to_string()).collect(),
            },
        );
        self
    }

    pub fn with_provider(mut self, slot: &str, provider: Provider) -> Self {
        self.providers.insert(slot.to_owned(), provider);
        self
    }

    pub fn expecting(mut self, label: &str) -> Self {
        self.expected = Some(label.to_owned());
        self
    }
}

enum Piece<'a> {
    Literal(&'a str),
    Slot(&'a str),
}

fn parse_pattern(pattern: &str) -> Result<Vec<Piece<'_>>> {
    let mut pieces = Vec::new();
    let mut rest = pattern;
    while let Some(open) = rest.find('{') {
        if open > 0 {
            pieces.push(Piece::Literal(&rest[..open]));
        }
        let close = rest[open..]
            .find('}')
            .ok_or_else(|| Error::invalid(format!("unclosed slot in `{pattern}`")))?;
        let name = &rest[open + 1..open + close];
        if name.is_empty() {
            return Err(Error::invalid(format!("empty slot in `{pattern}`")));
        }
        pieces.push(Piece::Slot(name));
        rest = &rest[open + close + 1..];
    }
    if !rest.is_empty() {
        pieces.push(Piece::Literal(rest));
    }
    Ok(pieces)
}

/// Fill the template `n` times. Slot values are recorded as instance
/// attributes and the expected label, if any, as gold.
pub fn expand_template(template: &Template, n: usize, seed: u64) -> Result<Vec<Instance>> {
    let pieces = parse_pattern(&template.pattern)?;
    let mut resolved: BTreeMap<&str, (Provider, Vec<String>)> = BTreeMap::new();
    for piece in &pieces {
        if let Piece::Slot(name) = piece {
            if resolved.contains_key(name) {
                continue;
            }
            let provider = template
                .providers
                .get(*name)
                .cloned()
                .or_else(|| Provider::builtin(name))
                .ok_or_else(|| Error::invalid(format!("unknown slot `{name}`")))?;
            let values = provider.values()?;
            resolved.insert(name, (provider, values));
        }
    }
    let mut rng = rng::stream(seed, &["template", &template.pattern]);
    let width = n.to_string().len();
    (0..n)
        .map(|i| {
            let mut text = String::new();
            let mut fills: BTreeMap<&str, String> = BTreeMap::new();
            for piece in &pieces {
                match piece {
                    Piece::Literal(s) => text.push_str(s),
                    Piece::Slot(name) => {
                        let value = fills
                            .entry(name)
                            .or_insert_with(|| {
                                let (provider, values) = &resolved[name];
                                provider.draw(values, &mut rng)
                            })
                            .clone();
                        text.push_str(&value);
                    }
                }
            }
            let mut instance = Instance::new(format!("tpl-{i:0width$}"), text);
            for (k, v) in fills {
                instance = instance.with_attribute(k, v);
            }
            if let Some(label) = &template.expected {
                instance = instance.with_label(label);
            }
            Ok(instance)
        })
        .collect()
}
