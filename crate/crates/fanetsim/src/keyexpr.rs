//! Hierarchical key expressions for named-data routing.
//!
//! A key expression is `/`-separated chunks. A chunk is either a literal over
//! `[a-z0-9_-]`, `*` (exactly one chunk), or `**` (zero or more chunks).
//! Expressions are normalized on parse: runs of adjacent `**` collapse to
//! one, so equal normalized forms denote equal key sets.

use std::fmt;

use serde::{de, Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum KeyExprError {
    #[error("key expression is empty")]
    Empty,
    #[error("empty chunk at position {index}")]
    EmptyChunk { index: usize },
    #[error("illegal character {ch:?} in chunk \"{chunk}\"")]
    IllegalChar { chunk: String, ch: char },
    #[error("chunk \"{chunk}\" mixes wildcard and literal characters")]
    MixedWildcard { chunk: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
enum Chunk {
    Literal(String),
    AnyOne,
    AnyMany,
}

/// A parsed, normalized key expression.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct KeyExpr {
    chunks: Vec<Chunk>,
}

impl KeyExpr {
    pub fn parse(s: &str) -> Result<KeyExpr, KeyExprError> {
        if s.is_empty() {
            return Err(KeyExprError::Empty);
        }
        let mut chunks = Vec::new();
        for (index, raw) in s.split('/').enumerate() {
            let chunk = match raw {
                "" => return Err(KeyExprError::EmptyChunk { index }),
                "*" => Chunk::AnyOne,
                "**" => Chunk::AnyMany,
                lit => {
                    if lit.contains('*') {
                        return Err(KeyExprError::MixedWildcard {
                            chunk: lit.to_string(),
                        });
                    }
                    if let Some(ch) = lit
                        .chars()
                        .find(|c| !matches!(c, 'a'..='z' | '0'..='9' | '_' | '-'))
                    {
                        return Err(KeyExprError::IllegalChar {
                            chunk: lit.to_string(),
                            ch,
                        });
                    }
                    Chunk::Literal(lit.to_string())
                }
            };
            // Normalize: a `**` following a `**` adds nothing.
            if chunk == Chunk::AnyMany && chunks.last() == Some(&Chunk::AnyMany) {
                continue;
            }
            chunks.push(chunk);
        }
        Ok(KeyExpr { chunks })
    }

    /// True when the expression contains no wildcards (i.e. it names exactly
    /// one key).
    pub fn is_concrete(&self) -> bool {
        self.chunks.iter().all(|c| matches!(c, Chunk::Literal(_)))
    }

    pub fn chunk_count(&self) -> usize {
        self.chunks.len()
    }

    /// Whether this expression matches the concrete `key`.
    ///
    /// Panics if `key` contains wildcards: matching is defined between an
    /// expression and a single key, not between two expressions (that is
    /// [`KeyExpr::intersects`]).
    pub fn matches(&self, key: &KeyExpr) -> bool {
        assert!(
            key.is_concrete(),
            "matches() requires a concrete key, got \"{key}\""
        );
        match_rec(&self.chunks, &key.chunks)
    }

    /// Whether some concrete key is matched by both expressions.
    pub fn intersects(&self, other: &KeyExpr) -> bool {
        intersect_rec(&self.chunks, &other.chunks)
    }
}

fn match_rec(expr: &[Chunk], key: &[Chunk]) -> bool {
    match expr.first() {
        None => key.is_empty(),
        Some(Chunk::AnyMany) => {
            // `**` absorbs zero chunks, or one chunk and stays.
            match_rec(&expr[1..], key) || (!key.is_empty() && match_rec(expr, &key[1..]))
        }
        Some(head) => {
            let Some(Chunk::Literal(k)) = key.first() else {
                return false;
            };
            let head_ok = match head {
                Chunk::Literal(e) => e == k,
                Chunk::AnyOne => true,
                Chunk::AnyMany => unreachable!(),
            };
            head_ok && match_rec(&expr[1..], &key[1..])
        }
    }
}

fn intersect_rec(a: &[Chunk], b: &[Chunk]) -> bool {
    match (a.first(), b.first()) {
        (None, None) => true,
        (Some(Chunk::AnyMany), _) => {
            intersect_rec(&a[1..], b) || (!b.is_empty() && intersect_rec(a, &b[1..]))
        }
        (_, Some(Chunk::AnyMany)) => {
            intersect_rec(a, &b[1..]) || (!a.is_empty() && intersect_rec(&a[1..], b))
        }
        (None, _) | (_, None) => false,
        (Some(x), Some(y)) => {
            let head_ok = match (x, y) {
                (Chunk::Literal(p), Chunk::Literal(q)) => p == q,
                // `*` intersects any single chunk.
                (Chunk::AnyOne, _) | (_, Chunk::AnyOne) => true,
                _ => unreachable!(),
            };
            head_ok && intersect_rec(&a[1..], &b[1..])
        }
    }
}

impl fmt::Display for KeyExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, c) in self.chunks.iter().enumerate() {
            if i > 0 {
                f.write_str("/")?;
            }
            match c {
                Chunk::Literal(s) => f.write_str(s)?,
                Chunk::AnyOne => f.write_str("*")?,
                Chunk::AnyMany => f.write_str("**")?,
            }
        }
        Ok(())
    }
}

impl Serialize for KeyExpr {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for KeyExpr {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        KeyExpr::parse(&s).map_err(de::Error::custom)
    }
}

impl std::str::FromStr for KeyExpr {
    type Err = KeyExprError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        KeyExpr::parse(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ke(s: &str) -> KeyExpr {
        KeyExpr::parse(s).unwrap()
    }

    #[test]
    fn parse_and_display_round_trip() {
        for s in ["a", "a/b/c", "telemetry/*/pose", "a/**/b", "*", "**"] {
            assert_eq!(ke(s).to_string(), s);
        }
    }

    #[test]
    fn adjacent_double_wild_collapses() {
        assert_eq!(ke("a/**/**/b"), ke("a/**/b"));
        assert_eq!(ke("**/**").to_string(), "**");
        assert_eq!(ke("a/**/**/**").to_string(), "a/**");
        // Normalization is idempotent: re-parsing the display form is a no-op.
        let n = ke("x/**/**/y/**/**");
        assert_eq!(ke(&n.to_string()), n);
    }

    #[test]
    fn parse_errors() {
        assert_eq!(KeyExpr::parse(""), Err(KeyExprError::Empty));
        assert_eq!(
            KeyExpr::parse("a//b"),
            Err(KeyExprError::EmptyChunk { index: 1 })
        );
        assert_eq!(
            KeyExpr::parse("/a"),
            Err(KeyExprError::EmptyChunk { index: 0 })
        );
        assert_eq!(
            KeyExpr::parse("a/b/"),
            Err(KeyExprError::EmptyChunk { index: 2 })
        );
        assert!(matches!(
            KeyExpr::parse("a/B/c"),
            Err(KeyExprError::IllegalChar { ch: 'B', .. })
        ));
        assert!(matches!(
            KeyExpr::parse("a.b"),
            Err(KeyExprError::IllegalChar { ch: '.', .. })
        ));
        assert!(matches!(
            KeyExpr::parse("a/b*/c"),
            Err(KeyExprError::MixedWildcard { .. })
        ));
        assert!(matches!(
            KeyExpr::parse("***"),
            Err(KeyExprError::MixedWildcard { .. })
        ));
    }

    #[test]
    fn literal_match_is_equality() {
        assert!(ke("a/b/c").matches(&ke("a/b/c")));
        assert!(!ke("a/b/c").matches(&ke("a/b")));
        assert!(!ke("a/b/c").matches(&ke("a/b/d")));
        assert!(!ke("a/b").matches(&ke("a/b/c")));
    }

    #[test]
    fn single_wild_matches_exactly_one_chunk() {
        assert!(ke("a/*/c").matches(&ke("a/b/c")));
        assert!(ke("a/*/c").matches(&ke("a/x/c")));
        assert!(!ke("a/*/c").matches(&ke("a/c")));
        assert!(!ke("a/*/c").matches(&ke("a/b/b/c")));
        assert!(ke("*").matches(&ke("a")));
        assert!(!ke("*").matches(&ke("a/b")));
    }

    #[test]
    fn double_wild_matches_zero_or_more() {
        assert!(ke("a/**/c").matches(&ke("a/c")));
        assert!(ke("a/**/c").matches(&ke("a/b/c")));
        assert!(ke("a/**/c").matches(&ke("a/b/b/b/c")));
        assert!(!ke("a/**/c").matches(&ke("a/b")));
        assert!(ke("**").matches(&ke("a")));
        assert!(ke("**").matches(&ke("a/b/c")));
        assert!(ke("telemetry/**").matches(&ke("telemetry/uav1/pose")));
        assert!(!ke("telemetry/**").matches(&ke("cmd/uav1")));
    }

    #[test]
    #[should_panic(expected = "requires a concrete key")]
    fn matching_against_wildcard_key_panics() {
        ke("a/b").matches(&ke("a/*"));
    }

    #[test]
    fn intersects_examples() {
        assert!(ke("a/*/c").intersects(&ke("a/b/**")));
        assert!(ke("a/**").intersects(&ke("**/b")));
        assert!(!ke("a/b").intersects(&ke("a/c")));
        assert!(!ke("a").intersects(&ke("a/b")));
        assert!(ke("**").intersects(&ke("x/y/z")));
        assert!(ke("*/b").intersects(&ke("a/*")));
        assert!(!ke("*/b").intersects(&ke("*/c")));
        // Witness a/a/a/b/b/b: prefix satisfies the left, suffix the right.
        assert!(ke("a/a/a/**").intersects(&ke("**/b/b/b")));
        // No witness: one side pins the last chunk to b, the other to c.
        assert!(!ke("a/**/b").intersects(&ke("a/**/c")));
        assert!(ke("a/a/a/**").intersects(&ke("**/a/a/a")));
    }

    #[test]
    fn intersects_is_symmetric_on_samples() {
        let exprs = [
            "a", "b", "a/b", "a/*", "*/b", "**", "a/**", "**/b", "a/**/c", "*", "a/b/c",
        ];
        for x in &exprs {
            for y in &exprs {
                assert_eq!(
                    ke(x).intersects(&ke(y)),
                    ke(y).intersects(&ke(x)),
                    "asymmetry for {x} vs {y}"
                );
            }
        }
    }

    #[test]
    fn match_implies_intersect_on_samples() {
        let exprs = ["a/b/c", "a/*/c", "a/**", "**/c", "**"];
        let keys = ["a/b/c", "a/x/c", "a/b", "c"];
        for e in &exprs {
            for k in &keys {
                if ke(e).matches(&ke(k)) {
                    assert!(ke(e).intersects(&ke(k)), "{e} matches {k} but no intersect");
                }
            }
        }
    }

    #[test]
    fn serde_round_trip_as_string() {
        let e = ke("telemetry/*/pose");
        let json = serde_json::to_string(&e).unwrap();
        assert_eq!(json, "\"telemetry/*/pose\"");
        let back: KeyExpr = serde_json::from_str(&json).unwrap();
        assert_eq!(back, e);
        assert!(serde_json::from_str::<KeyExpr>("\"a//b\"").is_err());
    }

    fn arb_chunk() -> impl Strategy<Value = String> {
        prop_oneof![
            3 => "[a-z0-9_-]{1,6}".prop_map(|s| s),
            1 => Just("*".to_string()),
            1 => Just("**".to_string()),
        ]
    }

    proptest! {
        #[test]
        fn parse_display_parse_is_stable(chunks in prop::collection::vec(arb_chunk(), 1..8)) {
            let s = chunks.join("/");
            let first = KeyExpr::parse(&s).unwrap();
            let second = KeyExpr::parse(&first.to_string()).unwrap();
            prop_assert_eq!(first, second);
        }

        #[test]
        fn concrete_self_match(chunks in prop::collection::vec("[a-z0-9_-]{1,6}", 1..8)) {
            let e = KeyExpr::parse(&chunks.join("/")).unwrap();
            prop_assert!(e.is_concrete());
            prop_assert!(e.matches(&e));
            prop_assert!(e.intersects(&e));
        }
    }
}
