use std::fmt;
use std::str::FromStr;

use super::EvalError;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RankerKind {
    Tfidf,
    Neural,
}

/// One ranker in a chain and how many passages it passes on.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Stage {
    pub kind: RankerKind,
    pub cut: usize,
}

/// A telescoping sequence of rankers, e.g. `tfidf:200,neural:5`. The first
/// stage is TF-IDF (it is the only ranker that scans the whole corpus) and
/// cuts strictly decrease.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RankerChain {
    stages: Vec<Stage>,
}

impl RankerChain {
    pub fn new(stages: Vec<Stage>) -> Result<Self, EvalError> {
        let first = stages.first().ok_or_else(|| EvalError::Chain("no stages".into()))?;
        if first.kind != RankerKind::Tfidf {
            return Err(EvalError::Chain("the first stage must be tfidf".into()));
        }
        if stages.iter().any(|s| s.cut == 0) {
            return Err(EvalError::Chain("cut sizes must be positive".into()));
        }
        if stages.windows(2).any(|w| w[1].cut >= w[0].cut) {
            return Err(EvalError::Chain("cut sizes must strictly decrease".into()));
        }
        Ok(RankerChain { stages })
    }

    pub fn stages(&self) -> &[Stage] {
        &self.stages
    }

    /// Number of passages the chain returns at most.
    pub fn k(&self) -> usize {
        self.stages.last().expect("chains are non-empty").cut
    }

    pub fn has_neural(&self) -> bool {
        self.stages.iter().any(|s| s.kind == RankerKind::Neural)
    }
}

impl FromStr for RankerChain {
    type Err = EvalError;

    fn from_str(text: &str) -> Result<Self, EvalError> {
        let stages = text
            .split(',')
            .map(|part| {
                let (kind, cut) = part
                    .trim()
                    .split_once(':')
                    .ok_or_else(|| EvalError::Chain(format!("stage {part:?} is not kind:cut")))?;
                let kind = match kind {
                    "tfidf" => RankerKind::Tfidf,
                    "neural" => RankerKind::Neural,
                    other => return Err(EvalError::Chain(format!("unknown ranker {other:?}"))),
                };
                let cut = cut
                    .parse()
                    .map_err(|_| EvalError::Chain(format!("cut {cut:?} is not a number")))?;
                Ok(Stage { kind, cut })
            })
            .collect::<Result<Vec<_>, _>>()?;
        RankerChain::new(stages)
    }
}

impl fmt::Display for RankerChain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, s) in self.stages.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            let kind = match s.kind {
                RankerKind::Tfidf => "tfidf",
                RankerKind::Neural => "neural",
            };
            write!(f, "{kind}:{}", s.cut)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_prints() {
        let c: RankerChain = "tfidf:200,neural:5".parse().unwrap();
        assert_eq!(c.stages().len(), 2);
        assert_eq!(c.k(), 5);
        assert_eq!(c.to_string(), "tfidf:200,neural:5");
        assert!(c.has_neural());
    }

    #[test]
    fn rejects_bad_chains() {
        for bad in ["", "tfidf", "neural:5", "tfidf:5,neural:5", "tfidf:5,neural:9", "tfidf:0", "bm25:3", "tfidf:x"] {
            assert!(bad.parse::<RankerChain>().is_err(), "{bad}");
        }
    }
}
