//! MARC 21 subject fields in mnemonic (line) form.

use crate::corpus::Category;

use super::aggregate::KeywordResult;

/// Thesaurus source code written to subfield `$2`.
pub const SOURCE_CODE: &str = "ems";

/// Subject field tag for a vocabulary category.
pub fn field_tag(category: Category) -> &'static str {
    match category {
        Category::Topic => "650",
        Category::Location => "651",
        Category::Time => "648",
        Category::GenreForm => "655",
        Category::Person => "600",
        Category::Collective => "610",
        Category::Event => "611",
    }
}

/// `650 _7 $a term $2 ems`
pub fn marc_line(term: &str, category: Category) -> String {
    format!("{} _7 $a {} $2 {}", field_tag(category), term, SOURCE_CODE)
}

/// One line per keyword in input order, each terminated by `\n`.
pub fn to_marc21(selected: &[KeywordResult]) -> String {
    selected
        .iter()
        .map(|k| marc_line(&k.term, k.category) + "\n")
        .collect()
}
