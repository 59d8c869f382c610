//! Core data model: exact rational probabilities, relation schemas,
//! probabilistic tuples, database instances and interpretations
//! (probability distributions over possible worlds).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use num::bigint::BigInt;
use num::{One, Signed, Zero};

/// Exact rational number. All probability arithmetic in the engine is exact;
/// no floating point is ever used for probabilities.
pub type Rational = num::BigRational;

/// Convenience constructor for small rationals.
pub fn rat(num: i64, den: i64) -> Rational {
    Rational::new(BigInt::from(num), BigInt::from(den))
}

/// Errors raised while building or validating the data model.
#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("invalid rational literal `{0}`")]
    BadRational(String),
    #[error("probability {0} out of range [0, 1]")]
    ProbabilityOutOfRange(String),
    #[error("invalid probability range `{0}`: lower bound exceeds upper bound")]
    EmptyProbabilityRange(String),
    #[error("schema parse error at line {line}: {msg}")]
    SchemaParse { line: usize, msg: String },
    #[error("duplicate relation `{0}` in schema")]
    DuplicateRelation(String),
    #[error("unknown relation `{0}`")]
    UnknownRelation(String),
    #[error("{relation}: CSV error: {msg}")]
    Csv { relation: String, msg: String },
    #[error("{relation} row {row}: expected {expected} value columns plus `p`, found {found} columns")]
    ColumnCount {
        relation: String,
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("{relation} row {row}, attribute `{attr}`: cannot parse `{value}` as {kind}")]
    BadValue {
        relation: String,
        row: usize,
        attr: String,
        value: String,
        kind: DomainKind,
    },
    #[error("{relation} row {row}: {msg}")]
    BadProbability {
        relation: String,
        row: usize,
        msg: String,
    },
    #[error("{relation}: duplicate deterministic tuple ({values})")]
    DuplicateTuple { relation: String, values: String },
    #[error("interpretation is not a probability distribution: {0}")]
    BadDistribution(String),
    #[error("interpretation marginal for {tuple}: expected within {expected}, got {got}")]
    MarginalMismatch {
        tuple: String,
        expected: String,
        got: String,
    },
    #[error("no tuple with id {0}")]
    NoSuchTuple(String),
}

/// Parse a rational literal: `a/b`, a decimal such as `0.75`, or an integer.
pub fn parse_rational(s: &str) -> Result<Rational, ModelError> {
    let s = s.trim();
    let bad = || ModelError::BadRational(s.to_string());
    if let Some((n, d)) = s.split_once('/') {
        let n: BigInt = n.trim().parse().map_err(|_| bad())?;
        let d: BigInt = d.trim().parse().map_err(|_| bad())?;
        if d.is_zero() {
            return Err(bad());
        }
        return Ok(Rational::new(n, d));
    }
    if let Some((int, frac)) = s.split_once('.') {
        if frac.is_empty() || !frac.bytes().all(|b| b.is_ascii_digit()) {
            return Err(bad());
        }
        let negative = int.trim_start().starts_with('-');
        let int: BigInt = if int.is_empty() || int == "-" {
            BigInt::zero()
        } else {
            int.parse().map_err(|_| bad())?
        };
        let num: BigInt = frac.parse().map_err(|_| bad())?;
        let den = BigInt::from(10u32).pow(frac.len() as u32);
        let frac_part = Rational::new(num, den);
        let int_part = Rational::from(int);
        return Ok(if negative {
            int_part - frac_part
        } else {
            int_part + frac_part
        });
    }
    let n: BigInt = s.parse().map_err(|_| bad())?;
    Ok(Rational::from(n))
}

/// Render a rational as `a/b` (or a bare integer when the denominator is 1).
pub fn format_rational(r: &Rational) -> String {
    r.to_string()
}

/// Domain kind of an attribute.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DomainKind {
    String,
    Integer,
    Rational,
}

impl fmt::Display for DomainKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DomainKind::String => write!(f, "string"),
            DomainKind::Integer => write!(f, "integer"),
            DomainKind::Rational => write!(f, "rational"),
        }
    }
}

/// Schema of a single relation: name plus ordered attribute list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RelationSchema {
    pub name: String,
    pub attributes: Vec<(String, DomainKind)>,
}

impl RelationSchema {
    pub fn arity(&self) -> usize {
        self.attributes.len()
    }

    pub fn attribute_index(&self, attr: &str) -> Option<usize> {
        self.attributes.iter().position(|(a, _)| a == attr)
    }
}

/// A constant value stored in a tuple or appearing in a constraint.
///
/// Strings compare lexicographically; integers and rationals compare
/// numerically (and interoperate with each other). Comparing a string with a
/// number is rejected earlier, at constraint-parse time.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum Value {
    Str(String),
    Int(BigInt),
    Rat(Rational),
}

impl Value {
    pub fn is_numeric(&self) -> bool {
        !matches!(self, Value::Str(_))
    }

    fn as_rational(&self) -> Option<Rational> {
        match self {
            Value::Str(_) => None,
            Value::Int(i) => Some(Rational::from(i.clone())),
            Value::Rat(r) => Some(r.clone()),
        }
    }

    /// Numeric-aware comparison. `None` when one side is a string and the
    /// other is a number.
    pub fn compare(&self, other: &Value) -> Option<std::cmp::Ordering> {
        match (self, other) {
            (Value::Str(a), Value::Str(b)) => Some(a.cmp(b)),
            (a, b) => {
                let (a, b) = (a.as_rational()?, b.as_rational()?);
                Some(a.cmp(&b))
            }
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Str(s) => write!(f, "{s}"),
            Value::Int(i) => write!(f, "{i}"),
            Value::Rat(r) => write!(f, "{r}"),
        }
    }
}

/// Probability annotation of a tuple: a closed interval `[lo, hi]`.
/// Point probabilities have `lo == hi`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProbabilityBound {
    pub lo: Rational,
    pub hi: Rational,
}

impl ProbabilityBound {
    pub fn point(p: Rational) -> Self {
        ProbabilityBound { lo: p.clone(), hi: p }
    }

    pub fn is_point(&self) -> bool {
        self.lo == self.hi
    }

    pub fn contains(&self, p: &Rational) -> bool {
        self.lo <= *p && *p <= self.hi
    }

    fn validate(&self, origin: impl Fn() -> String) -> Result<(), ModelError> {
        if self.lo > self.hi {
            return Err(ModelError::EmptyProbabilityRange(origin()));
        }
        if self.lo.is_negative() || self.hi > Rational::one() {
            return Err(ModelError::ProbabilityOutOfRange(origin()));
        }
        Ok(())
    }
}

impl fmt::Display for ProbabilityBound {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_point() {
            write!(f, "{}", self.lo)
        } else {
            write!(f, "{}..{}", self.lo, self.hi)
        }
    }
}

/// Numeric tuple identifier; dense indices into [`PDBInstance::tuples`].
pub type TupleId = usize;

/// Display name of a tuple id (`t1`-based, following load order).
pub fn tuple_name(id: TupleId) -> String {
    format!("t{}", id + 1)
}

/// A probabilistic tuple: deterministic part plus probability annotation.
#[derive(Debug, Clone)]
pub struct PTuple {
    pub tuple_id: TupleId,
    pub relation: String,
    pub values: Vec<Value>,
    pub prob: ProbabilityBound,
}

impl PTuple {
    pub fn name(&self) -> String {
        tuple_name(self.tuple_id)
    }
}

/// A probabilistic database instance.
#[derive(Debug, Clone)]
pub struct PDBInstance {
    pub schemas: Vec<RelationSchema>,
    pub tuples: Vec<PTuple>,
    by_relation: BTreeMap<String, Vec<TupleId>>,
}

impl PDBInstance {
    pub fn schema(&self, relation: &str) -> Option<&RelationSchema> {
        self.schemas.iter().find(|s| s.name == relation)
    }

    pub fn tuple(&self, id: TupleId) -> Result<&PTuple, ModelError> {
        self.tuples
            .get(id)
            .ok_or_else(|| ModelError::NoSuchTuple(tuple_name(id)))
    }

    /// Tuple ids of a relation, in load order.
    pub fn relation_tuples(&self, relation: &str) -> &[TupleId] {
        self.by_relation
            .get(relation)
            .map(|v| v.as_slice())
            .unwrap_or(&[])
    }

    /// The deterministic part of the instance: every (relation, values) fact.
    pub fn det(&self) -> Vec<(&str, &[Value])> {
        self.tuples
            .iter()
            .map(|t| (t.relation.as_str(), t.values.as_slice()))
            .collect()
    }

    /// Marginal probability bound of a tuple.
    pub fn marginal(&self, id: TupleId) -> Result<&ProbabilityBound, ModelError> {
        Ok(&self.tuple(id)?.prob)
    }

    /// True when every tuple carries a point probability.
    pub fn all_point(&self) -> bool {
        self.tuples.iter().all(|t| t.prob.is_point())
    }
}

/// Parse a schema file. One declaration per line:
/// `relation Name(attr:kind, ...)` with kinds `string`, `integer`, `rational`.
/// `#` starts a comment; blank lines are ignored.
pub fn parse_schema(text: &str) -> Result<Vec<RelationSchema>, ModelError> {
    let mut schemas: Vec<RelationSchema> = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = lineno + 1;
        let src = match raw.split_once('#') {
            Some((before, _)) => before,
            None => raw,
        }
        .trim();
        if src.is_empty() {
            continue;
        }
        let err = |msg: &str| ModelError::SchemaParse {
            line,
            msg: msg.to_string(),
        };
        let rest = src
            .strip_prefix("relation")
            .ok_or_else(|| err("expected `relation Name(attr:kind, ...)`"))?
            .trim_start();
        let open = rest.find('(').ok_or_else(|| err("missing `(`"))?;
        let name = rest[..open].trim();
        if name.is_empty() || !name.chars().all(|c| c.is_alphanumeric() || c == '_') {
            return Err(err("invalid relation name"));
        }
        let close = rest.rfind(')').ok_or_else(|| err("missing `)`"))?;
        if !rest[close + 1..].trim().is_empty() {
            return Err(err("trailing characters after `)`"));
        }
        let mut attributes = Vec::new();
        for part in rest[open + 1..close].split(',') {
            let part = part.trim();
            if part.is_empty() {
                return Err(err("empty attribute declaration"));
            }
            let (attr, kind) = part
                .split_once(':')
                .ok_or_else(|| err("attribute must be `name:kind`"))?;
            let attr = attr.trim();
            if attr.is_empty() || !attr.chars().all(|c| c.is_alphanumeric() || c == '_') {
                return Err(err("invalid attribute name"));
            }
            if attributes.iter().any(|(a, _): &(String, _)| a == attr) {
                return Err(err(&format!("duplicate attribute `{attr}`")));
            }
            let kind = match kind.trim() {
                "string" => DomainKind::String,
                "integer" => DomainKind::Integer,
                "rational" => DomainKind::Rational,
                other => return Err(err(&format!("unknown kind `{other}`"))),
            };
            attributes.push((attr.to_string(), kind));
        }
        if attributes.is_empty() {
            return Err(err("relation must have at least one attribute"));
        }
        if schemas.iter().any(|s| s.name == name) {
            return Err(ModelError::DuplicateRelation(name.to_string()));
        }
        schemas.push(RelationSchema {
            name: name.to_string(),
            attributes,
        });
    }
    Ok(schemas)
}

fn parse_value(raw: &str, kind: DomainKind) -> Option<Value> {
    let raw = raw.trim();
    match kind {
        DomainKind::String => Some(Value::Str(raw.to_string())),
        DomainKind::Integer => raw.parse::<BigInt>().ok().map(Value::Int),
        DomainKind::Rational => parse_rational(raw).ok().map(Value::Rat),
    }
}

/// Parse a probability cell: `a/b`, a decimal, an integer, or a range
/// `lo..hi` with the same literal forms on both sides.
pub fn parse_probability(raw: &str) -> Result<ProbabilityBound, ModelError> {
    let raw = raw.trim();
    let bound = if let Some((lo, hi)) = raw.split_once("..") {
        ProbabilityBound {
            lo: parse_rational(lo)?,
            hi: parse_rational(hi)?,
        }
    } else {
        ProbabilityBound::point(parse_rational(raw)?)
    };
    bound.validate(|| raw.to_string())?;
    Ok(bound)
}

/// Load an instance from schema text plus one CSV source per relation.
///
/// Each CSV must have a header naming the relation's attributes in schema
/// order followed by a final `p` column. Lines starting with `#` are skipped.
/// Tuples with probability upper bound 0 are dropped with a warning (they can
/// never appear in a possible world). Duplicate deterministic tuples within a
/// relation are an error.
///
/// Returns the instance together with any warnings produced during loading.
pub fn load_instance(
    schema_text: &str,
    data_sources: &[(String, String)],
) -> Result<(PDBInstance, Vec<String>), ModelError> {
    let schemas = parse_schema(schema_text)?;
    let mut tuples: Vec<PTuple> = Vec::new();
    let mut by_relation: BTreeMap<String, Vec<TupleId>> = BTreeMap::new();
    let mut warnings = Vec::new();
    for (relation, text) in data_sources {
        let schema = schemas
            .iter()
            .find(|s| &s.name == relation)
            .ok_or_else(|| ModelError::UnknownRelation(relation.clone()))?;
        let mut seen: BTreeSet<Vec<Value>> = BTreeSet::new();
        let mut reader = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .flexible(true)
            .from_reader(text.as_bytes());
        {
            let headers = reader.headers().map_err(|e| ModelError::Csv {
                relation: relation.clone(),
                msg: e.to_string(),
            })?;
            let expected: Vec<&str> = schema
                .attributes
                .iter()
                .map(|(a, _)| a.as_str())
                .chain(std::iter::once("p"))
                .collect();
            let got: Vec<&str> = headers.iter().collect();
            if got != expected {
                return Err(ModelError::Csv {
                    relation: relation.clone(),
                    msg: format!(
                        "header mismatch: expected {}, found {}",
                        expected.join(","),
                        got.join(",")
                    ),
                });
            }
        }
        for (i, record) in reader.records().enumerate() {
            let row = i + 2; // 1-based, after the header line
            let record = record.map_err(|e| ModelError::Csv {
                relation: relation.clone(),
                msg: e.to_string(),
            })?;
            if record.len() != schema.arity() + 1 {
                return Err(ModelError::ColumnCount {
                    relation: relation.clone(),
                    row,
                    expected: schema.arity(),
                    found: record.len(),
                });
            }
            let mut values = Vec::with_capacity(schema.arity());
            for (j, (attr, kind)) in schema.attributes.iter().enumerate() {
                let raw = &record[j];
                let value = parse_value(raw, *kind).ok_or_else(|| ModelError::BadValue {
                    relation: relation.clone(),
                    row,
                    attr: attr.clone(),
                    value: raw.to_string(),
                    kind: *kind,
                })?;
                values.push(value);
            }
            let prob = parse_probability(&record[schema.arity()]).map_err(|e| {
                ModelError::BadProbability {
                    relation: relation.clone(),
                    row,
                    msg: e.to_string(),
                }
            })?;
            if !seen.insert(values.clone()) {
                return Err(ModelError::DuplicateTuple {
                    relation: relation.clone(),
                    values: values
                        .iter()
                        .map(|v| v.to_string())
                        .collect::<Vec<_>>()
                        .join(","),
                });
            }
            if prob.hi.is_zero() {
                warnings.push(format!(
                    "{relation} row {row}: tuple has probability 0 and was dropped"
                ));
                continue;
            }
            let tuple_id = tuples.len();
            by_relation
                .entry(relation.clone())
                .or_default()
                .push(tuple_id);
            tuples.push(PTuple {
                tuple_id,
                relation: relation.clone(),
                values,
                prob,
            });
        }
    }
    Ok((
        PDBInstance {
            schemas,
            tuples,
            by_relation,
        },
        warnings,
    ))
}

/// A possible world: the set of tuples that are present.
pub type World = BTreeSet<TupleId>;

/// An interpretation: a probability distribution over possible worlds.
#[derive(Debug, Clone, Default)]
pub struct Interpretation {
    pub worlds: BTreeMap<World, Rational>,
}

impl Interpretation {
    /// Validate that this is a probability distribution over subsets of the
    /// instance's tuples whose marginals match the instance's annotations.
    pub fn validate(&self, instance: &PDBInstance) -> Result<(), ModelError> {
        let mut total = Rational::zero();
        for (world, mass) in &self.worlds {
            if mass.is_negative() {
                return Err(ModelError::BadDistribution(format!(
                    "negative mass {mass}"
                )));
            }
            if let Some(&id) = world.iter().find(|&&id| id >= instance.tuples.len()) {
                return Err(ModelError::BadDistribution(format!(
                    "world mentions unknown tuple {}",
                    tuple_name(id)
                )));
            }
            total += mass;
        }
        if !total.is_one() {
            return Err(ModelError::BadDistribution(format!(
                "total mass {total}, expected 1"
            )));
        }
        for tuple in &instance.tuples {
            let mut marginal = Rational::zero();
            for (world, mass) in &self.worlds {
                if world.contains(&tuple.tuple_id) {
                    marginal += mass;
                }
            }
            if !tuple.prob.contains(&marginal) {
                return Err(ModelError::MarginalMismatch {
                    tuple: tuple.name(),
                    expected: tuple.prob.to_string(),
                    got: marginal.to_string(),
                });
            }
        }
        Ok(())
    }

    /// Marginal probability of a tuple under this interpretation.
    pub fn marginal_of(&self, id: TupleId) -> Rational {
        self.worlds
            .iter()
            .filter(|(w, _)| w.contains(&id))
            .map(|(_, m)| m.clone())
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rational_literals() {
        assert_eq!(parse_rational("3/4").unwrap(), rat(3, 4));
        assert_eq!(parse_rational("0.75").unwrap(), rat(3, 4));
        assert_eq!(parse_rational("1").unwrap(), rat(1, 1));
        assert_eq!(parse_rational("-1/2").unwrap(), rat(-1, 2));
        assert_eq!(parse_rational("2/4").unwrap(), rat(1, 2));
        assert_eq!(parse_rational(".5").unwrap(), rat(1, 2));
        assert!(parse_rational("1/0").is_err());
        assert!(parse_rational("x").is_err());
        assert!(parse_rational("1.2.3").is_err());
    }

    #[test]
    fn rational_formatting() {
        assert_eq!(format_rational(&rat(1, 2)), "1/2");
        assert_eq!(format_rational(&rat(2, 1)), "2");
        assert_eq!(format_rational(&rat(0, 5)), "0");
    }

    #[test]
    fn probability_cells() {
        assert_eq!(parse_probability("1/2").unwrap(), ProbabilityBound::point(rat(1, 2)));
        let range = parse_probability("1/4..3/4").unwrap();
        assert_eq!(range.lo, rat(1, 4));
        assert_eq!(range.hi, rat(3, 4));
        assert!(parse_probability("3/2").is_err());
        assert!(parse_probability("-1/2").is_err());
        assert!(parse_probability("3/4..1/4").is_err());
    }

    #[test]
    fn schema_parsing() {
        let schemas =
            parse_schema("# rooms\nrelation Room(id:integer, price:rational, view:string)\n")
                .unwrap();
        assert_eq!(schemas.len(), 1);
        assert_eq!(schemas[0].name, "Room");
        assert_eq!(schemas[0].arity(), 3);
        assert_eq!(schemas[0].attributes[1], ("price".into(), DomainKind::Rational));
        assert!(parse_schema("relation R(a:bool)").is_err());
        assert!(parse_schema("relation R(a:string)\nrelation R(b:string)").is_err());
        assert!(parse_schema("table R(a:string)").is_err());
    }

    const SCHEMA: &str = "relation R(name:string, age:integer)\n";

    fn load(csv: &str) -> Result<(PDBInstance, Vec<String>), ModelError> {
        load_instance(SCHEMA, &[("R".to_string(), csv.to_string())])
    }

    #[test]
    fn loads_tuples_in_order() {
        let (inst, warnings) = load("name,age,p\nalice,30,1/2\nbob,40,1\n").unwrap();
        assert!(warnings.is_empty());
        assert_eq!(inst.tuples.len(), 2);
        assert_eq!(inst.tuples[0].name(), "t1");
        assert_eq!(inst.tuples[0].values[0], Value::Str("alice".into()));
        assert_eq!(inst.tuples[1].prob, ProbabilityBound::point(rat(1, 1)));
        assert_eq!(inst.relation_tuples("R"), &[0, 1]);
        assert_eq!(inst.marginal(0).unwrap().lo, rat(1, 2));
    }

    #[test]
    fn drops_zero_probability_tuples_with_warning() {
        let (inst, warnings) = load("name,age,p\nalice,30,0\nbob,40,1/2\n").unwrap();
        assert_eq!(inst.tuples.len(), 1);
        assert_eq!(inst.tuples[0].values[0], Value::Str("bob".into()));
        assert_eq!(warnings.len(), 1);
        assert!(warnings[0].contains("dropped"));
    }

    #[test]
    fn rejects_duplicate_deterministic_tuples() {
        let err = load("name,age,p\nalice,30,1/2\nalice,30,3/4\n").unwrap_err();
        assert!(matches!(err, ModelError::DuplicateTuple { .. }));
    }

    #[test]
    fn rejects_bad_headers_and_values() {
        assert!(load("name,p\nalice,1/2\n").is_err());
        assert!(load("name,age,p\nalice,old,1/2\n").is_err());
        assert!(load("name,age,p\nalice,30,7/4\n").is_err());
    }

    #[test]
    fn value_comparisons() {
        use std::cmp::Ordering;
        let i = Value::Int(BigInt::from(2));
        let r = Value::Rat(rat(5, 2));
        let s = Value::Str("2".into());
        assert_eq!(i.compare(&r), Some(Ordering::Less));
        assert_eq!(r.compare(&i), Some(Ordering::Greater));
        assert_eq!(i.compare(&Value::Int(BigInt::from(2))), Some(Ordering::Equal));
        assert_eq!(s.compare(&i), None);
        assert_eq!(
            Value::Str("a".into()).compare(&Value::Str("b".into())),
            Some(Ordering::Less)
        );
    }

    #[test]
    fn interpretation_validation() {
        let (inst, _) = load("name,age,p\nalice,30,1/2\nbob,40,1/2\n").unwrap();
        // Two worlds of mass 1/2 each: {t1} and {t2}.
        let mut interp = Interpretation::default();
        interp.worlds.insert(BTreeSet::from([0]), rat(1, 2));
        interp.worlds.insert(BTreeSet::from([1]), rat(1, 2));
        interp.validate(&inst).unwrap();
        assert_eq!(interp.marginal_of(0), rat(1, 2));

        // Wrong marginal.
        let mut bad = Interpretation::default();
        bad.worlds.insert(BTreeSet::from([0, 1]), rat(1, 1));
        assert!(matches!(
            bad.validate(&inst),
            Err(ModelError::MarginalMismatch { .. })
        ));

        // Mass does not sum to one.
        let mut bad = Interpretation::default();
        bad.worlds.insert(BTreeSet::from([0]), rat(1, 2));
        assert!(matches!(
            bad.validate(&inst),
            Err(ModelError::BadDistribution(_))
        ));
    }

    #[test]
    fn range_probabilities_load() {
        let (inst, _) = load("name,age,p\nalice,30,1/4..1/2\n").unwrap();
        assert!(!inst.all_point());
        let b = inst.marginal(0).unwrap();
        assert_eq!(b.lo, rat(1, 4));
        assert_eq!(b.hi, rat(1, 2));
        let mut interp = Interpretation::default();
        interp.worlds.insert(BTreeSet::from([0]), rat(1, 3));
        interp.worlds.insert(BTreeSet::new(), rat(2, 3));
        interp.validate(&inst).unwrap();
    }
}
