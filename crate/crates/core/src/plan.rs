//! Join-project plan terms and their parenthesized text format.
//!
//! ```text
//! plan    := NAME | (join plan plan) | (project (NAME*) plan) | (unit) | (dummy NAME)
//! ```
//!
//! `unit` is the 0-ary relation holding the empty tuple (the join identity)
//! and `dummy a` is the unary relation holding every domain value of `a`.
//! Both only appear while projections are being eliminated.

use std::fmt;

use crate::error::{Error, Result};
use crate::query::{is_token, JoinQuery};

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Plan {
    Leaf(String),
    Join(Box<Plan>, Box<Plan>),
    Project(Vec<String>, Box<Plan>),
    Unit,
    Dummy(String),
}

/// Shape statistics of a plan tree.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PlanStats {
    pub leaf_count: usize,
    pub projection_count: usize,
    pub depth: usize,
}

impl Plan {
    pub fn leaf(name: impl Into<String>) -> Plan {
        Plan::Leaf(name.into())
    }

    pub fn join(left: Plan, right: Plan) -> Plan {
        Plan::Join(Box::new(left), Box::new(right))
    }

    pub fn project<S: Into<String>>(attrs: impl IntoIterator<Item = S>, child: Plan) -> Plan {
        Plan::Project(attrs.into_iter().map(Into::into).collect(), Box::new(child))
    }

    /// Left-deep join of the given plans; `None` when empty.
    pub fn left_deep(parts: impl IntoIterator<Item = Plan>) -> Option<Plan> {
        parts.into_iter().reduce(Plan::join)
    }

    pub fn children(&self) -> Vec<&Plan> {
        match self {
            Plan::Join(l, r) => vec![l, r],
            Plan::Project(_, c) => vec![c],
            Plan::Leaf(_) | Plan::Unit | Plan::Dummy(_) => vec![],
        }
    }

    pub fn is_leaf(&self) -> bool {
        matches!(self, Plan::Leaf(_) | Plan::Unit | Plan::Dummy(_))
    }

    pub fn stats(&self) -> PlanStats {
        match self {
            Plan::Leaf(_) | Plan::Unit | Plan::Dummy(_) => PlanStats {
                leaf_count: 1,
                projection_count: 0,
                depth: 0,
            },
            Plan::Join(l, r) => {
                let (l, r) = (l.stats(), r.stats());
                PlanStats {
                    leaf_count: l.leaf_count + r.leaf_count,
                    projection_count: l.projection_count + r.projection_count,
                    depth: 1 + l.depth.max(r.depth),
                }
            }
            Plan::Project(_, c) => {
                let c = c.stats();
                PlanStats {
                    depth: c.depth + 1,
                    projection_count: c.projection_count + 1,
                    ..c
                }
            }
        }
    }

    pub fn projection_count(&self) -> usize {
        self.stats().projection_count
    }

    /// A join plan is a plan without projections.
    pub fn is_join_plan(&self) -> bool {
        self.projection_count() == 0
    }

    /// Every subplan in post-order (children before parents, left before
    /// right). Evaluation traces use the same order.
    pub fn subplans(&self) -> Vec<&Plan> {
        let mut out = Vec::new();
        fn walk<'a>(p: &'a Plan, out: &mut Vec<&'a Plan>) {
            for c in p.children() {
                walk(c, out);
            }
            out.push(p);
        }
        walk(self, &mut out);
        out
    }

    /// Names of relation leaves, left to right, with repetition.
    pub fn leaf_names(&self) -> Vec<&str> {
        self.subplans()
            .into_iter()
            .filter_map(|p| match p {
                Plan::Leaf(name) => Some(name.as_str()),
                _ => None,
            })
            .collect()
    }

    pub fn contains_leaf(&self, name: &str) -> bool {
        match self {
            Plan::Leaf(n) => n == name,
            Plan::Join(l, r) => l.contains_leaf(name) || r.contains_leaf(name),
            Plan::Project(_, c) => c.contains_leaf(name),
            Plan::Unit | Plan::Dummy(_) => false,
        }
    }

    /// Output attributes `A_φ` in evaluation column order; also validates
    /// the plan against the schema.
    pub fn output_attributes(&self, query: &JoinQuery) -> Result<Vec<String>> {
        match self {
            Plan::Leaf(name) => {
                let index = query
                    .relation_index(name)
                    .ok_or_else(|| Error::domain(format!("plan names unknown relation `{name}`")))?;
                Ok(query.relation_attr_names(index))
            }
            Plan::Unit => Ok(Vec::new()),
            Plan::Dummy(attr) => {
                if query.attr_index(attr).is_none() {
                    return Err(Error::domain(format!("dummy on unknown attribute `{attr}`")));
                }
                Ok(vec![attr.clone()])
            }
            Plan::Join(l, r) => {
                let mut attrs = l.output_attributes(query)?;
                for a in r.output_attributes(query)? {
                    if !attrs.contains(&a) {
                        attrs.push(a);
                    }
                }
                Ok(attrs)
            }
            Plan::Project(keep, child) => {
                let attrs = child.output_attributes(query)?;
                if let Some(missing) = keep.iter().find(|a| !attrs.contains(a)) {
                    return Err(Error::domain(format!(
                        "projection onto `{missing}` which the subplan does not produce"
                    )));
                }
                Ok(attrs.into_iter().filter(|a| keep.contains(a)).collect())
            }
        }
    }

    pub fn validate(&self, query: &JoinQuery) -> Result<()> {
        self.output_attributes(query).map(|_| ())
    }
}

impl fmt::Display for Plan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Plan::Leaf(name) => write!(f, "{name}"),
            Plan::Join(l, r) => write!(f, "(join {l} {r})"),
            Plan::Project(attrs, c) => write!(f, "(project ({}) {c})", attrs.join(" ")),
            Plan::Unit => write!(f, "(unit)"),
            Plan::Dummy(a) => write!(f, "(dummy {a})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Open,
    Close,
    Word(String),
}

struct Lexer<'a> {
    tokens: Vec<(Token, usize)>,
    pos: usize,
    source: &'a str,
}

impl<'a> Lexer<'a> {
    fn new(source: &'a str, text: &str) -> Self {
        let mut tokens = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = crate::query::strip_comment(line);
            let mut word = String::new();
            for ch in line.chars() {
                match ch {
                    '(' | ')' => {
                        if !word.is_empty() {
                            tokens.push((Token::Word(std::mem::take(&mut word)), lineno + 1));
                        }
                        let tok = if ch == '(' { Token::Open } else { Token::Close };
                        tokens.push((tok, lineno + 1));
                    }
                    c if c.is_whitespace() => {
                        if !word.is_empty() {
                            tokens.push((Token::Word(std::mem::take(&mut word)), lineno + 1));
                        }
                    }
                    c => word.push(c),
                }
            }
            if !word.is_empty() {
                tokens.push((Token::Word(word), lineno + 1));
            }
        }
        Lexer {
            tokens,
            pos: 0,
            source,
        }
    }

    fn line(&self) -> usize {
        self.tokens
            .get(self.pos)
            .or_else(|| self.tokens.last())
            .map_or(1, |t| t.1)
    }

    fn error(&self, message: impl Into<String>) -> Error {
        Error::parse(self.source, self.line(), message)
    }

    fn next(&mut self) -> Result<Token> {
        let tok = self
            .tokens
            .get(self.pos)
            .map(|t| t.0.clone())
            .ok_or_else(|| self.error("unexpected end of plan"))?;
        self.pos += 1;
        Ok(tok)
    }

    fn word(&mut self) -> Result<String> {
        match self.next()? {
            Token::Word(w) if is_token(&w) => Ok(w),
            other => {
                self.pos -= 1;
                Err(self.error(format!("expected a name, found {other:?}")))
            }
        }
    }

    fn expect(&mut self, tok: Token) -> Result<()> {
        let found = self.next()?;
        if found == tok {
            Ok(())
        } else {
            self.pos -= 1;
            Err(self.error(format!("expected {tok:?}, found {found:?}")))
        }
    }

    fn plan(&mut self) -> Result<Plan> {
        match self.next()? {
            Token::Word(w) if is_token(&w) => Ok(Plan::Leaf(w)),
            Token::Open => {
                let head = self.word()?;
                let plan = match head.as_str() {
                    "join" => {
                        let l = self.plan()?;
                        let r = self.plan()?;
                        Plan::join(l, r)
                    }
                    "project" => {
                        self.expect(Token::Open)?;
                        let mut attrs = Vec::new();
                        loop {
                            match self.next()? {
                                Token::Close => break,
                                Token::Word(w) if is_token(&w) => {
                                    if !attrs.contains(&w) {
                                        attrs.push(w)
                                    }
                                }
                                other => {
                                    self.pos -= 1;
                                    return Err(self.error(format!(
                                        "expected attribute name, found {other:?}"
                                    )));
                                }
                            }
                        }
                        Plan::Project(attrs, Box::new(self.plan()?))
                    }
                    "unit" => Plan::Unit,
                    "dummy" => Plan::Dummy(self.word()?),
                    other => return Err(self.error(format!("unknown plan operator `{other}`"))),
                };
                self.expect(Token::Close)?;
                Ok(plan)
            }
            other => {
                self.pos -= 1;
                Err(self.error(format!("unexpected {other:?}")))
            }
        }
    }
}

/// Parses one plan term.
pub fn parse_plan(text: &str) -> Result<Plan> {
    parse_plan_named("<plan>", text)
}

pub fn parse_plan_named(source_name: &str, text: &str) -> Result<Plan> {
    let mut lexer = Lexer::new(source_name, text);
    let plan = lexer.plan()?;
    if lexer.pos != lexer.tokens.len() {
        return Err(lexer.error("trailing input after plan"));
    }
    Ok(plan)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::query::parse_query;
    use proptest::prelude::*;

    #[test]
    fn parses_and_prints() {
        let text = "(project (a c) (join (join R S) T))";
        let plan = parse_plan(text).unwrap();
        assert_eq!(plan.to_string(), text);
        let stats = plan.stats();
        assert_eq!(stats.leaf_count, 3);
        assert_eq!(stats.projection_count, 1);
        assert_eq!(stats.depth, 3);
        assert_eq!(parse_plan("R").unwrap(), Plan::leaf("R"));
        assert_eq!(
            parse_plan("(join (unit) (dummy a))").unwrap(),
            Plan::join(Plan::Unit, Plan::Dummy("a".into()))
        );
    }

    #[test]
    fn reports_parse_errors() {
        assert!(matches!(parse_plan("(join R"), Err(Error::Parse { .. })));
        assert!(matches!(parse_plan("(frob R S)"), Err(Error::Parse { .. })));
        assert!(matches!(parse_plan("R S"), Err(Error::Parse { .. })));
        let err = parse_plan("(join R\n  (project (a b) ))").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
    }

    #[test]
    fn output_attributes_follow_join_order() {
        let q = parse_query("rel R a b\nrel S b c\nrel T c a").unwrap();
        let plan = parse_plan("(project (c a) (join R S))").unwrap();
        assert_eq!(plan.output_attributes(&q).unwrap(), ["a", "c"]);
        assert!(parse_plan("(project (a) S)").unwrap().validate(&q).is_err());
        assert!(parse_plan("X").unwrap().validate(&q).is_err());
    }

    #[test]
    fn subplans_are_post_order() {
        let plan = parse_plan("(join (join R S) T)").unwrap();
        let names: Vec<String> = plan.subplans().iter().map(|p| p.to_string()).collect();
        assert_eq!(names, ["R", "S", "(join R S)", "T", "(join (join R S) T)"]);
    }

    fn arb_plan() -> impl Strategy<Value = Plan> {
        let leaf = prop_oneof![
            "[A-Z][a-z0-9_]{0,3}".prop_map(Plan::Leaf),
            Just(Plan::Unit),
            "[a-z]{1,3}".prop_map(Plan::Dummy),
        ];
        leaf.prop_recursive(5, 32, 2, |inner| {
            prop_oneof![
                (inner.clone(), inner.clone()).prop_map(|(l, r)| Plan::join(l, r)),
                (proptest::collection::btree_set("[a-z]{1,2}", 0..4), inner)
                    .prop_map(|(attrs, c)| Plan::project(attrs, c)),
            ]
        })
    }

    proptest! {
        #[test]
        fn text_round_trips(plan in arb_plan()) {
            prop_assert_eq!(parse_plan(&plan.to_string()).unwrap(), plan);
        }
    }
}
