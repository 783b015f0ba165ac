use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Instruction templates shown to the pairwise scorer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum PromptId {
    Generic,
    #[default]
    Object,
    Landmark,
}

const GENERIC: &str = "You are given two images: a query and a candidate.  Determine whether the candidate is similar to the query image.

Output strictly a single digit:
- 0 = the object instance does not appear.
- 1 = the object instance appears in the candidate.
Do not output anything else.";

const OBJECT: &str = "You are given two images: a query and a candidate. Determine whether the exact same object instance from the query image is present in the candidate image.
- The instance must be the same, not just a similar object.
- The instance may appear at a different scale, partially occluded, or among other objects.

Output strictly a single digit:
- 0 = the object instance does not appear.
- 1 = the object instance appears in the candidate.
Do not output anything else.";

const LANDMARK: &str = "You are given two images: a query and a candidate. Determine whether the exact same landmark, building, or architectural detail from the query image is present in the candidate image.
- The instance must be the same, not just a similar-looking building or structure.
- The query image may show the entire landmark or just a specific, cropped part of it (like a doorway, statue, or window).
- The instance in the candidate image may appear at a different scale, from a different viewpoint/angle, under different lighting, or be partially occluded.
Output strictly a single digit:
- 0 = the object instance does not appear.
- 1 = the object instance appears in the candidate.
Do not output anything else.";

impl PromptId {
    pub const ALL: [PromptId; 3] = [PromptId::Generic, PromptId::Object, PromptId::Landmark];

    pub fn as_str(&self) -> &'static str {
        match self {
            PromptId::Generic => "generic",
            PromptId::Object => "object",
            PromptId::Landmark => "landmark",
        }
    }

    pub fn text(&self) -> &'static str {
        match self {
            PromptId::Generic => GENERIC,
            PromptId::Object => OBJECT,
            PromptId::Landmark => LANDMARK,
        }
    }
}

impl fmt::Display for PromptId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PromptId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| Error::Parse(format!("unknown prompt `{s}`")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn templates_ask_for_one_binary_digit() {
        for p in PromptId::ALL {
            let t = p.text();
            assert!(t.starts_with("You are given two images: a query and a candidate."));
            assert!(t.contains("Output strictly a single digit"));
            assert!(t.contains("0 = the object instance does not appear."));
            assert!(t.contains("1 = the object instance appears in the candidate."));
            assert!(t.ends_with("Do not output anything else."));
            assert_eq!(p.as_str().parse::<PromptId>().unwrap(), p);
        }
        assert!(PromptId::Object
            .text()
            .contains("The instance must be the same, not just a similar object."));
        assert!(PromptId::Landmark
            .text()
            .contains("like a doorway, statue, or window"));
    }
}
