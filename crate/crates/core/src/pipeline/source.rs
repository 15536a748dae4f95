//! Turning uploaded or fetched bytes into page texts.
//!
//! Accepted formats: a corpus JSONL/JSON book record, a PDF with a text
//! layer, and plain UTF-8 text with pages separated by form feeds.

use std::path::Path;

use log::warn;

use crate::corpus::{parse_corpus, BookRecord};
use crate::error::{Error, Result};

/// Upper bound on the decompressed content of one PDF page.
const PDF_PAGE_LIMIT: usize = 64 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SourceFormat {
    Corpus,
    Pdf,
    Text,
}

/// Sniffs the format from the content; `name` only breaks ties for JSON.
pub fn detect_format(bytes: &[u8], name: Option<&str>) -> SourceFormat {
    let head = bytes.trim_ascii_start();
    if head.starts_with(b"%PDF-") {
        SourceFormat::Pdf
    } else if head.starts_with(b"{")
        || name.is_some_and(|n| n.ends_with(".jsonl") || n.ends_with(".json"))
    {
        SourceFormat::Corpus
    } else {
        SourceFormat::Text
    }
}

/// Reads a book from bytes. For corpus input the first record is used, or
/// the record whose id is `book_id`.
pub fn read_book(bytes: &[u8], name: Option<&str>, book_id: Option<&str>) -> Result<BookRecord> {
    let fallback_id = name
        .and_then(|n| Path::new(n).file_stem())
        .map_or_else(|| "book".to_string(), |s| s.to_string_lossy().into_owned());
    let pages = match detect_format(bytes, name) {
        SourceFormat::Corpus => {
            let books = parse_corpus(bytes)?;
            let book = match book_id {
                Some(id) => books.into_iter().find(|b| b.id == id).ok_or_else(|| {
                    Error::UnsupportedSource(format!("no book with id {id:?} in the input"))
                })?,
                None => books
                    .into_iter()
                    .next()
                    .ok_or_else(|| Error::UnsupportedSource("empty corpus file".into()))?,
            };
            if book.pages.is_empty() {
                return Err(Error::UnsupportedSource(format!("book {:?} has no pages", book.id)));
            }
            return Ok(book);
        }
        SourceFormat::Pdf => pdf_pages(bytes)?,
        SourceFormat::Text => text_pages(bytes)?,
    };
    Ok(BookRecord {
        id: fallback_id.clone(),
        title: fallback_id,
        language: "und".into(),
        author_birth_year: None,
        pages,
        subjects: Vec::new(),
    })
}

pub fn read_book_file(path: impl AsRef<Path>, book_id: Option<&str>) -> Result<BookRecord> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    read_book(&bytes, path.to_str(), book_id)
}

/// Plain text split on form feeds; a text without form feeds is one page.
pub fn text_pages(bytes: &[u8]) -> Result<Vec<String>> {
    let text = std::str::from_utf8(bytes)
        .map_err(|e| Error::UnsupportedSource(format!("text input is not UTF-8: {e}")))?;
    if text.trim().is_empty() {
        return Err(Error::UnsupportedSource("text input is empty".into()));
    }
    Ok(text.split('\u{000C}').map(str::to_string).collect())
}

/// Text layer of every page, in page order.
///
/// Pages whose text cannot be decoded come back empty (and fail the quality
/// gate later). A PDF without text on any page is rejected: it is most likely
/// a scan, and OCR is not supported.
pub fn pdf_pages(bytes: &[u8]) -> Result<Vec<String>> {
    let doc = lopdf::Document::load_mem(bytes)
        .map_err(|e| Error::UnsupportedSource(format!("unreadable PDF: {e}")))?;
    let numbers: Vec<u32> = doc.get_pages().keys().copied().collect();
    if numbers.is_empty() {
        return Err(Error::UnsupportedSource("PDF has no pages".into()));
    }
    let pages: Vec<String> = numbers
        .iter()
        .map(|&n| {
            doc.extract_text_with_limit(&[n], PDF_PAGE_LIMIT)
                .unwrap_or_else(|e| {
                    warn!("PDF page {n}: no extractable text ({e})");
                    String::new()
                })
        })
        .collect();
    if pages.iter().all(|p| p.trim().is_empty()) {
        return Err(Error::UnsupportedSource(
            "PDF has no text layer (scanned images need OCR, which is not supported)".into(),
        ));
    }
    Ok(pages)
}

/// A minimal PDF with one page per entry, each holding its text in a single
/// WinAnsi-encoded Helvetica run. Characters outside WinAnsi are lost.
pub fn write_text_pdf<S: AsRef<str>>(pages: &[S]) -> Result<Vec<u8>> {
    use lopdf::content::{Content, Operation};
    use lopdf::{dictionary, Document, Encoding, Object, Stream};

    let pdf_err = |e: lopdf::Error| Error::UnsupportedSource(format!("PDF write failed: {e}"));
    let mut doc = Document::with_version("1.5");
    let pages_id = doc.new_object_id();
    let font_id = doc.add_object(dictionary! {
        "Type" => "Font",
        "Subtype" => "Type1",
        "BaseFont" => "Helvetica",
        "Encoding" => "WinAnsiEncoding",
    });
    let resources_id = doc.add_object(dictionary! {
        "Font" => dictionary! { "F1" => font_id },
    });
    let encoding = Encoding::SimpleEncoding(b"WinAnsiEncoding");
    let mut kids: Vec<Object> = Vec::with_capacity(pages.len());
    for text in pages {
        let bytes = Document::encode_text(&encoding, text.as_ref());
        let content = Content {
            operations: vec![
                Operation::new("BT", vec![]),
                Operation::new("Tf", vec!["F1".into(), 10.into()]),
                Operation::new("Td", vec![40.into(), 800.into()]),
                Operation::new("Tj", vec![Object::String(bytes, lopdf::StringFormat::Literal)]),
                Operation::new("ET", vec![]),
            ],
        };
        let content_id =
            doc.add_object(Stream::new(dictionary! {}, content.encode().map_err(pdf_err)?));
        let page_id = doc.add_object(dictionary! {
            "Type" => "Page",
            "Parent" => pages_id,
            "Contents" => content_id,
        });
        kids.push(page_id.into());
    }
    let count = kids.len() as i64;
    doc.objects.insert(
        pages_id,
        Object::Dictionary(dictionary! {
            "Type" => "Pages",
            "Kids" => kids,
            "Count" => count,
            "Resources" => resources_id,
            "MediaBox" => vec![0.into(), 0.into(), 595.into(), 842.into()],
        }),
    );
    let catalog_id = doc.add_object(dictionary! {
        "Type" => "Catalog",
        "Pages" => pages_id,
    });
    doc.trailer.set("Root", catalog_id);
    doc.compress();
    let mut out = Vec::new();
    doc.save_to(&mut out)
        .map_err(|e| Error::UnsupportedSource(format!("PDF write failed: {e}")))?;
    Ok(out)
}
