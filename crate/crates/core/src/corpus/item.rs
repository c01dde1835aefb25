use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::evaluation::text::header_key;

/// Broad grouping of a data item; decides how its cells are encoded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ItemClass {
    /// Simple, well-defined citation details held as one scalar.
    Citation,
    /// Open-ended items holding lists of verbatim excerpts.
    KeyFindings,
    /// Remaining columns of the full review instrument.
    Instrument,
}

macro_rules! data_items {
    ($( $variant:ident => $column:literal, $class:ident, [$($alias:literal),*] ;)*) => {
        /// A column of the data extraction instrument.
        ///
        /// Declaration order is the full review instrument order; the
        /// extraction instrument is an order-preserving subset of it.
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        pub enum DataItem {
            $( $variant, )*
        }

        impl DataItem {
            pub const ALL: &'static [DataItem] = &[ $( DataItem::$variant, )* ];

            /// Canonical CSV column title.
            pub fn column_name(self) -> &'static str {
                match self {
                    $( DataItem::$variant => $column, )*
                }
            }

            pub fn class(self) -> ItemClass {
                match self {
                    $( DataItem::$variant => ItemClass::$class, )*
                }
            }

            fn aliases(self) -> &'static [&'static str] {
                match self {
                    $( DataItem::$variant => &[$($alias),*], )*
                }
            }
        }
    };
}

data_items! {
    Authors => "Author(s)", Citation, ["authors", "author", "author(s) (vancouver reference style)"];
    PublicationYear => "Publication year", Citation, ["publication date", "year", "year of publication", "date of publication", "date"];
    Title => "Title", Citation, ["title of source", "document title"];
    Journal => "Journal", Instrument, ["journal (or other publication source)", "publication source"];
    Volume => "Volume", Instrument, [];
    Issue => "Issue", Instrument, [];
    Pages => "Pages", Instrument, [];
    Keywords => "Keywords", Instrument, ["author (or other) keywords", "author keywords"];
    SourcePerspective => "Source perspective", Instrument, [];
    CountryOfOrigin => "Country of origin", Instrument, [];
    DocumentType => "Type of evidence source", Instrument, ["type of evidence source (document type)", "document type"];
    AimsPurpose => "Document aims / purpose", Instrument, ["document aims", "aims / purpose"];
    ObjectiveType => "Type of net-outcome objective", Instrument, ["objective type", "type of net outcome objective", "type of net outcome"];
    HealthObjective => "Health net-outcome objective", Instrument, ["health net-outcome objective, target, aim or goal"];
    DerivedHealthObjective => "Derived health net-outcome objective", Instrument, [];
    PrimaryObjective => "Primary net-outcome objective", Instrument, ["primary net-outcome objective, target, aim or goal"];
    DerivedPrimaryObjective => "Derived primary net-outcome objective", Instrument, [];
    CountriesOfApplication => "Country / countries of application", Instrument, ["countries of application"];
    Scales => "Scale(s) of application", Instrument, ["scales of application"];
    Rationale => "Rationale(s) for net-outcome objective(s)", Instrument, ["rationale"];
    Description => "Description(s) of net-outcome objective(s)", Instrument, ["description"];
    HealthTermDefinition => "Definition of objective's health term(s)", Instrument, [];
    NetOutcomeDefinition => "Net-outcome definition / characterisation and/or metric(s)", Instrument, [];
    NetOutcomeLevel => "Net-outcome level emphasised", Instrument, [];
    SpecificMetrics => "Specific metric(s) or broader framework(s)", Instrument, [];
    ImplementationPrinciples => "Implementation principles", KeyFindings, ["implementation principle(s) and/or steps", "implementation principle(s)", "implementation principle"];
    Strengths => "Strengths", KeyFindings, ["positive effects or implications (strengths)", "strength"];
    Weaknesses => "Weaknesses", KeyFindings, ["negative effects or implications (weaknesses)", "weakness"];
    Opportunities => "Opportunities", KeyFindings, ["implementation opportunities (opportunities)", "implementation opportunities", "opportunity"];
    Threats => "Threats", KeyFindings, ["implementation challenges (threats)", "implementation challenges", "threat", "challenges"];
    Url => "Url", Instrument, ["url", "weblink"];
}

impl DataItem {
    pub const CITATION: [DataItem; 3] = [DataItem::Authors, DataItem::PublicationYear, DataItem::Title];

    pub const KEY_FINDINGS: [DataItem; 5] = [
        DataItem::ImplementationPrinciples,
        DataItem::Strengths,
        DataItem::Weaknesses,
        DataItem::Opportunities,
        DataItem::Threats,
    ];

    pub fn is_key_finding(self) -> bool {
        self.class() == ItemClass::KeyFindings
    }

    /// Whether a cell of this item may hold "Unstated" or "Aggregated".
    pub fn accepts_sentinel(self) -> bool {
        self.class() != ItemClass::Citation
    }

    /// Part of the bibliographic citation block of the review instrument
    /// (the three extraction citation items plus journal, volume, issue,
    /// pages and keywords).
    pub fn is_citation_detail(self) -> bool {
        matches!(
            self,
            DataItem::Authors
                | DataItem::PublicationYear
                | DataItem::Title
                | DataItem::Journal
                | DataItem::Volume
                | DataItem::Issue
                | DataItem::Pages
                | DataItem::Keywords
        )
    }

    /// Resolves a column title or response header (case, punctuation and
    /// whitespace insensitive, synonyms accepted).
    pub fn from_header(text: &str) -> Option<DataItem> {
        let key = header_key(text);
        if key.is_empty() {
            return None;
        }
        DataItem::ALL.iter().copied().find(|item| {
            header_key(item.column_name()) == key || item.aliases().iter().any(|a| header_key(a) == key)
        })
    }
}

impl fmt::Display for DataItem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.column_name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown data item {0:?}")]
pub struct UnknownItem(pub String);

impl FromStr for DataItem {
    type Err = UnknownItem;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        DataItem::from_header(s).ok_or_else(|| UnknownItem(s.to_string()))
    }
}

/// An ordered list of data items defining the columns of a record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Instrument {
    items: Vec<DataItem>,
}

impl Instrument {
    /// The eight extraction targets: three citation items then five key
    /// findings items.
    pub fn extraction() -> Self {
        let mut items = DataItem::CITATION.to_vec();
        items.extend(DataItem::KEY_FINDINGS);
        Instrument { items }
    }

    /// Every column of the full review instrument.
    pub fn review() -> Self {
        Instrument { items: DataItem::ALL.to_vec() }
    }

    /// Builds a custom instrument. Duplicates are dropped, first one wins.
    pub fn new(items: impl IntoIterator<Item = DataItem>) -> Self {
        let mut out: Vec<DataItem> = Vec::new();
        for item in items {
            if !out.contains(&item) {
                out.push(item);
            }
        }
        Instrument { items: out }
    }

    pub fn items(&self) -> &[DataItem] {
        &self.items
    }

    pub fn contains(&self, item: DataItem) -> bool {
        self.items.contains(&item)
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn key_findings(&self) -> impl Iterator<Item = DataItem> + '_ {
        self.items.iter().copied().filter(|i| i.is_key_finding())
    }

    pub fn citation(&self) -> impl Iterator<Item = DataItem> + '_ {
        self.items.iter().copied().filter(|i| i.class() == ItemClass::Citation)
    }
}
