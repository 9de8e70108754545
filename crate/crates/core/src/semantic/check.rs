use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use super::ast::{Agg, Ident, Literal, MetricDefinition, Operand, Predicate};
use super::error::{ErrorKind, MetricError, Pos};
use super::parser::parse_metrics;
use crate::entity::EntityKind;
use crate::value::FieldType;

/// Field types of every queryable source: entity kinds plus derived models.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Catalog {
    sources: BTreeMap<String, BTreeMap<String, FieldType>>,
}

fn fields(pairs: &[(&str, FieldType)]) -> BTreeMap<String, FieldType> {
    pairs.iter().map(|(n, t)| (n.to_string(), *t)).collect()
}

impl Catalog {
    pub fn standard() -> Catalog {
        use FieldType::{Bool, Date, Integer, Str};
        let mut sources = BTreeMap::new();
        for kind in EntityKind::ALL {
            let mut f: BTreeMap<String, FieldType> = kind
                .schema()
                .iter()
                .map(|d| (d.name.to_string(), d.ty))
                .collect();
            f.insert("event_date".into(), Date);
            f.insert("lineage_id".into(), Str);
            f.insert("source_id".into(), Str);
            sources.insert(kind.as_str().to_string(), f);
        }
        let activations = sources[EntityKind::ProvisioningEvent.as_str()].clone();
        sources.insert("activations".into(), activations);
        sources.insert(
            "recon_left".into(),
            fields(&[
                ("spec", Str),
                ("lineage_id", Str),
                ("entity_kind", Str),
                ("event_date", Date),
                ("natural_key", Str),
                ("location_id", Str),
                ("state", Str),
                ("counterpart", Str),
                ("matched", Bool),
                ("eligible", Bool),
            ]),
        );
        sources.insert(
            "exceptions".into(),
            fields(&[
                ("exception_id", Str),
                ("spec", Str),
                ("lineage_id", Str),
                ("entity_kind", Str),
                ("category", Str),
                ("status", Str),
                ("opened_as_of", Date),
                ("natural_key", Str),
                ("location_id", Str),
                ("owner", Str),
                ("age_days", Integer),
                ("escalated", Bool),
            ]),
        );
        sources.insert(
            "inventory_lots".into(),
            fields(&[
                ("material_code", Str),
                ("location_id", Str),
                ("received_date", Date),
                ("remaining_qty", Integer),
                ("age_days", Integer),
                ("bucket", Str),
            ]),
        );
        sources.insert(
            "inventory_snapshots".into(),
            fields(&[
                ("snapshot_date", Date),
                ("material_code", Str),
                ("location_id", Str),
                ("quantity_on_hand", Integer),
            ]),
        );
        Catalog { sources }
    }

    /// Registers a typed field produced by staging rules beyond the canonical
    /// schema. Activations mirror provisioning events.
    pub fn add_entity_field(&mut self, kind: EntityKind, field: &str, ty: FieldType) {
        let mut targets = alloc::vec![kind.as_str()];
        if kind == EntityKind::ProvisioningEvent {
            targets.push("activations");
        }
        for target in targets {
            if let Some(fields) = self.sources.get_mut(target) {
                fields.entry(field.to_string()).or_insert(ty);
            }
        }
    }

    pub fn source(&self, name: &str) -> Option<&BTreeMap<String, FieldType>> {
        self.sources.get(name)
    }

    pub fn field_type(&self, source: &str, field: &str) -> Option<FieldType> {
        self.sources.get(source)?.get(field).copied()
    }

    pub fn source_names(&self) -> impl Iterator<Item = &str> {
        self.sources.keys().map(String::as_str)
    }
}

/// A problem with a single definition, before locations are attached.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CheckError {
    UnknownSource(Ident),
    UnknownField { source: String, field: Ident },
    Type(MetricError),
}

fn type_error(pos: Pos, message: String) -> CheckError {
    CheckError::Type(MetricError {
        kind: ErrorKind::Type,
        pos,
        message,
        expected: vec![],
    })
}

fn literal_type(l: &Literal) -> FieldType {
    match l {
        Literal::Str(_) => FieldType::Str,
        Literal::Num(_) => FieldType::Number,
        Literal::Date(_) => FieldType::Date,
        Literal::Bool(_) => FieldType::Bool,
    }
}

struct Checker<'a> {
    source: &'a str,
    fields: &'a BTreeMap<String, FieldType>,
}

impl Checker<'_> {
    fn field(&self, f: &Ident) -> Result<FieldType, CheckError> {
        self.fields
            .get(&f.name)
            .copied()
            .ok_or_else(|| CheckError::UnknownField {
                source: self.source.to_string(),
                field: f.clone(),
            })
    }

    fn operand<'o>(&self, o: &'o Operand) -> Result<(FieldType, Option<&'o Ident>), CheckError> {
        match o {
            Operand::Field(f) => Ok((self.field(f)?, Some(f))),
            Operand::Lit(l) => Ok((literal_type(l), None)),
        }
    }

    fn predicate(&self, p: &Predicate) -> Result<(), CheckError> {
        match p {
            Predicate::Compare { left, op, right } => {
                let (lt, lf) = self.operand(left)?;
                let (rt, rf) = self.operand(right)?;
                let pos = lf.or(rf).map(|f| f.pos).unwrap_or_default();
                let name = |o: &Operand| match o {
                    Operand::Field(f) => format!("field `{}`", f.name),
                    Operand::Lit(l) => format!("literal {l}"),
                };
                if !lt.comparable_with(rt) {
                    return Err(type_error(
                        pos,
                        format!(
                            "cannot compare {} ({lt}) with {} ({rt})",
                            name(left),
                            name(right)
                        ),
                    ));
                }
                if op.is_ordering() && lt == FieldType::Bool {
                    return Err(type_error(
                        pos,
                        format!("`{}` is not defined on bool {}", op.symbol(), name(left)),
                    ));
                }
                Ok(())
            }
            Predicate::InList {
                operand, values, ..
            } => {
                let (ty, f) = self.operand(operand)?;
                let pos = f.map(|f| f.pos).unwrap_or_default();
                for v in values {
                    if !ty.comparable_with(literal_type(v)) {
                        return Err(type_error(
                            pos,
                            format!("list value {v} does not match {operand} ({ty})"),
                        ));
                    }
                }
                Ok(())
            }
            Predicate::And(a, b) | Predicate::Or(a, b) => {
                self.predicate(a)?;
                self.predicate(b)
            }
            Predicate::Not(p) => self.predicate(p),
            Predicate::Truthy(f) => match self.field(f)? {
                FieldType::Bool => Ok(()),
                other => Err(type_error(
                    f.pos,
                    format!("field `{}` is {other}, not bool", f.name),
                )),
            },
            Predicate::Const(_) => Ok(()),
        }
    }
}

/// Resolves fields and checks types of one definition. Ratio components
/// are checked by the registry.
pub fn check_definition(def: &MetricDefinition, catalog: &Catalog) -> Result<(), CheckError> {
    if let Agg::Ratio(..) = def.agg {
        if let Some(s) = &def.source {
            return Err(type_error(
                s.pos,
                format!("ratio metric `{}` takes no source", def.name.name),
            ));
        }
        if def.filter.is_some() {
            return Err(type_error(
                def.name.pos,
                format!("ratio metric `{}` takes no filter", def.name.name),
            ));
        }
        return Ok(());
    }
    let source = def
        .source
        .as_ref()
        .expect("parser requires a source for non-ratio metrics");
    let fields = catalog
        .source(&source.name)
        .ok_or_else(|| CheckError::UnknownSource(source.clone()))?;
    let checker = Checker {
        source: &source.name,
        fields,
    };
    if let Some(p) = &def.filter {
        checker.predicate(p)?;
    }
    match &def.agg {
        Agg::Count | Agg::Ratio(..) => {}
        Agg::CountDistinct(f) => {
            checker.field(f)?;
        }
        Agg::Sum(f) => {
            let ty = checker.field(f)?;
            if !ty.is_numeric() {
                return Err(type_error(
                    f.pos,
                    format!("sum needs a numeric field; `{}` is {ty}", f.name),
                ));
            }
        }
    }
    for g in &def.grain {
        checker.field(g)?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RegistryError {
    Parse {
        location: String,
        error: MetricError,
    },
    Duplicate {
        name: String,
        first: String,
        second: String,
    },
    UnknownSource {
        metric: String,
        source: String,
        location: String,
    },
    UnknownField {
        metric: String,
        source: String,
        field: String,
        location: String,
    },
    Type {
        metric: String,
        location: String,
        error: MetricError,
    },
    UnknownMetric {
        metric: String,
        reference: String,
        location: String,
    },
    Cycle {
        path: Vec<String>,
    },
    GrainMismatch {
        metric: String,
        numerator: Vec<String>,
        denominator: Vec<String>,
    },
}

impl fmt::Display for RegistryError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RegistryError::Parse { location, error } => write!(f, "{location}: {error}"),
            RegistryError::Duplicate {
                name,
                first,
                second,
            } => write!(f, "metric `{name}` defined twice: {first} and {second}"),
            RegistryError::UnknownSource {
                metric,
                source,
                location,
            } => write!(
                f,
                "{location}: metric `{metric}` reads unknown source `{source}`"
            ),
            RegistryError::UnknownField {
                metric,
                source,
                field,
                location,
            } => {
                write!(f, "{location}: metric `{metric}` references unknown field `{field}` of `{source}`")
            }
            RegistryError::Type {
                metric,
                location,
                error,
            } => write!(f, "{location}: metric `{metric}`: {error}"),
            RegistryError::UnknownMetric {
                metric,
                reference,
                location,
            } => write!(
                f,
                "{location}: metric `{metric}` references unknown metric `{reference}`"
            ),
            RegistryError::Cycle { path } => write!(f, "ratio cycle: {}", path.join(" -> ")),
            RegistryError::GrainMismatch {
                metric,
                numerator,
                denominator,
            } => {
                write!(
                    f,
                    "metric `{metric}`: components differ in grain ({}) vs ({})",
                    numerator.join(", "),
                    denominator.join(", ")
                )
            }
        }
    }
}

impl core::error::Error for RegistryError {}

/// Static part of a metric's lineage.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LineageTrace {
    pub metric: String,
    pub definition_digest: String,
    /// Source entities or models feeding the value, transitively.
    pub sources: BTreeSet<String>,
    /// Component metrics of a ratio, transitively, in evaluation order.
    pub components: Vec<String>,
    /// Filled at evaluation: source systems of contributing rows.
    pub source_systems: BTreeSet<String>,
    /// Filled at evaluation: staging rule and crosswalk versions of contributing rows.
    pub config_versions: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegisteredMetric {
    pub def: MetricDefinition,
    pub location: String,
    pub digest: String,
    /// For ratios, the shared grain of the components.
    pub grain: Vec<String>,
    pub lineage: LineageTrace,
}

/// Validated, immutable set of metric definitions.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Registry {
    metrics: BTreeMap<String, RegisteredMetric>,
    order: Vec<String>,
}

fn location(file: &str, pos: Pos) -> String {
    format!("{file}:{pos}")
}

impl Registry {
    /// Parses and validates `(path, text)` files.
    pub fn from_files(
        files: &[(String, String)],
        catalog: &Catalog,
    ) -> Result<Registry, Vec<RegistryError>> {
        let mut defs = Vec::new();
        let mut errors = Vec::new();
        for (path, text) in files {
            match parse_metrics(text) {
                Ok(parsed) => defs.extend(parsed.into_iter().map(|d| (path.clone(), d))),
                Err(error) => errors.push(RegistryError::Parse {
                    location: location(path, error.pos),
                    error,
                }),
            }
        }
        match Registry::validate(defs, catalog) {
            Ok(r) if errors.is_empty() => Ok(r),
            Ok(_) => Err(errors),
            Err(more) => {
                errors.extend(more);
                Err(errors)
            }
        }
    }

    /// Checks every definition; all problems are reported together.
    pub fn validate(
        defs: Vec<(String, MetricDefinition)>,
        catalog: &Catalog,
    ) -> Result<Registry, Vec<RegistryError>> {
        let mut errors = Vec::new();
        let mut metrics: BTreeMap<String, RegisteredMetric> = BTreeMap::new();
        for (file, def) in defs {
            let name = def.name.name.clone();
            let loc = location(&file, def.name.pos);
            if let Some(existing) = metrics.get(&name) {
                errors.push(RegistryError::Duplicate {
                    name,
                    first: existing.location.clone(),
                    second: loc,
                });
                continue;
            }
            match check_definition(&def, catalog) {
                Ok(()) => {}
                Err(CheckError::UnknownSource(s)) => errors.push(RegistryError::UnknownSource {
                    metric: name.clone(),
                    source: s.name,
                    location: location(&file, s.pos),
                }),
                Err(CheckError::UnknownField { source, field }) => {
                    errors.push(RegistryError::UnknownField {
                        metric: name.clone(),
                        source,
                        field: field.name,
                        location: location(&file, field.pos),
                    })
                }
                Err(CheckError::Type(error)) => errors.push(RegistryError::Type {
                    metric: name.clone(),
                    location: location(&file, error.pos),
                    error,
                }),
            }
            let digest = def.version();
            let grain = def.grain.iter().map(|g| g.name.clone()).collect();
            let lineage = LineageTrace {
                metric: name.clone(),
                definition_digest: digest.clone(),
                ..LineageTrace::default()
            };
            metrics.insert(
                name,
                RegisteredMetric {
                    def,
                    location: loc,
                    digest,
                    grain,
                    lineage,
                },
            );
        }
        for m in metrics.values() {
            if let Agg::Ratio(a, b) = &m.def.agg {
                for r in [a, b] {
                    if !metrics.contains_key(&r.name) {
                        errors.push(RegistryError::UnknownMetric {
                            metric: m.def.name.name.clone(),
                            reference: r.name.clone(),
                            location: m.location.clone(),
                        });
                    }
                }
            }
        }
        if !errors.is_empty() {
            return Err(errors);
        }
        let order = match topological(&metrics) {
            Ok(order) => order,
            Err(path) => return Err(vec![RegistryError::Cycle { path }]),
        };
        for name in &order {
            let m = &metrics[name];
            let (sources, components, grain) = match &m.def.agg {
                Agg::Ratio(a, b) => {
                    let (na, nb) = (&metrics[&a.name], &metrics[&b.name]);
                    if na.grain != nb.grain || (!m.grain.is_empty() && m.grain != na.grain) {
                        errors.push(RegistryError::GrainMismatch {
                            metric: name.clone(),
                            numerator: na.grain.clone(),
                            denominator: nb.grain.clone(),
                        });
                    }
                    let mut sources = na.lineage.sources.clone();
                    sources.extend(nb.lineage.sources.iter().cloned());
                    let mut components = Vec::new();
                    for c in na
                        .lineage
                        .components
                        .iter()
                        .chain([&a.name])
                        .chain(nb.lineage.components.iter())
                        .chain([&b.name])
                    {
                        if !components.contains(c) {
                            components.push(c.clone());
                        }
                    }
                    (sources, components, na.grain.clone())
                }
                _ => (
                    BTreeSet::from([m
                        .def
                        .source
                        .as_ref()
                        .map(|s| s.name.clone())
                        .unwrap_or_default()]),
                    Vec::new(),
                    m.grain.clone(),
                ),
            };
            let m = metrics.get_mut(name).expect("present");
            m.lineage.sources = sources;
            m.lineage.components = components;
            m.grain = grain;
        }
        if !errors.is_empty() {
            return Err(errors);
        }
        Ok(Registry { metrics, order })
    }

    pub fn get(&self, name: &str) -> Option<&RegisteredMetric> {
        self.metrics.get(name)
    }

    /// Names with every ratio after its components.
    pub fn order(&self) -> &[String] {
        &self.order
    }

    pub fn len(&self) -> usize {
        self.metrics.len()
    }

    pub fn is_empty(&self) -> bool {
        self.metrics.is_empty()
    }
}

fn topological(metrics: &BTreeMap<String, RegisteredMetric>) -> Result<Vec<String>, Vec<String>> {
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        Active,
        Done,
    }
    fn visit(
        name: &str,
        metrics: &BTreeMap<String, RegisteredMetric>,
        marks: &mut BTreeMap<String, Mark>,
        stack: &mut Vec<String>,
        order: &mut Vec<String>,
    ) -> Result<(), Vec<String>> {
        match marks.get(name) {
            Some(Mark::Done) => return Ok(()),
            Some(Mark::Active) => {
                let start = stack.iter().position(|s| s == name).unwrap_or(0);
                let mut path = stack[start..].to_vec();
                path.push(name.to_string());
                return Err(path);
            }
            None => {}
        }
        marks.insert(name.to_string(), Mark::Active);
        stack.push(name.to_string());
        if let Agg::Ratio(a, b) = &metrics[name].def.agg {
            visit(&a.name, metrics, marks, stack, order)?;
            visit(&b.name, metrics, marks, stack, order)?;
        }
        stack.pop();
        marks.insert(name.to_string(), Mark::Done);
        order.push(name.to_string());
        Ok(())
    }
    let mut marks = BTreeMap::new();
    let mut order = Vec::new();
    for name in metrics.keys() {
        visit(name, metrics, &mut marks, &mut Vec::new(), &mut order)?;
    }
    Ok(order)
}
