//! The length / style / temperament controls offered for message refinement.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

macro_rules! choice_enum {
    ($name:ident { $($variant:ident => $wire:literal : $directive:literal),+ $(,)? }) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        #[serde(rename_all = "snake_case")]
        pub enum $name {
            $($variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(self) -> &'static str {
                match self {
                    $($name::$variant => $wire),+
                }
            }

            /// Fixed instruction sentence used inside refinement prompts.
            pub fn directive(self) -> &'static str {
                match self {
                    $($name::$variant => $directive),+
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $name {
            type Err = String;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                let norm = s.trim().to_ascii_lowercase().replace([' ', '-'], "_");
                $name::ALL
                    .iter()
                    .copied()
                    .find(|v| v.as_str() == norm)
                    .ok_or_else(|| format!("unknown {} {s:?}", stringify!($name).to_ascii_lowercase()))
            }
        }
    };
}

choice_enum!(Length {
    MuchShorter => "much_shorter": "Make the message much shorter than the original.",
    SlightlyShorter => "slightly_shorter": "Make the message slightly shorter than the original.",
    SameLength => "same_length": "Keep the message about the same length as the original.",
    SlightlyLonger => "slightly_longer": "Make the message slightly longer than the original.",
    MuchLonger => "much_longer": "Make the message much longer than the original.",
});

choice_enum!(Style {
    Sarcastic => "sarcastic": "Write in a sarcastic style.",
    Aggressive => "aggressive": "Write in an aggressive style.",
    Exuberant => "exuberant": "Write in an exuberant style.",
    Cynic => "cynic": "Write in a cynical style.",
    Detached => "detached": "Write in a detached style.",
});

choice_enum!(Temperament {
    Neutral => "neutral": "Keep a neutral temperament.",
    Informal => "informal": "Keep an informal temperament.",
    Expressive => "expressive": "Keep an expressive temperament.",
    Concise => "concise": "Keep a concise temperament.",
    Formal => "formal": "Keep a formal temperament.",
});

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RefinementConstraints {
    pub length: Length,
    pub style: Style,
    pub temperament: Temperament,
}

impl RefinementConstraints {
    pub fn new(style: Style, temperament: Temperament, length: Length) -> Self {
        RefinementConstraints { length, style, temperament }
    }

    /// Every combination of the three controls.
    pub fn all() -> impl Iterator<Item = RefinementConstraints> {
        Length::ALL.iter().flat_map(|&length| {
            Style::ALL.iter().flat_map(move |&style| {
                Temperament::ALL.iter().map(move |&temperament| RefinementConstraints { length, style, temperament })
            })
        })
    }

    /// One directive per line: style, temperament, length.
    pub fn render(&self) -> String {
        format!("- {}\n- {}\n- {}", self.style.directive(), self.temperament.directive(), self.length.directive())
    }
}
