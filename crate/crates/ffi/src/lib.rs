//! C ABI over `hanja-core`.
//!
//! Conventions:
//! - every fallible function returns a [`HanjaStatus`]; on failure a
//!   message is kept per thread and can be fetched with
//!   [`hanja_last_error_message`];
//! - strings in are NUL-terminated UTF-8, strings out are allocated here
//!   and must be released with [`hanja_string_free`];
//! - label sequences, tag sequences and spans travel as JSON arrays;
//! - handles are opaque and released with their `_free` function.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use hanja_core::entities::{decode_iob2, encode_iob2, parse_tags, EntityError, EntitySpan};
use hanja_core::glossary::{Glossary, GlossaryError, UrlTemplate};
use hanja_core::punctuation::{LabelRegistry, PunctError, RenderMode};
use hanja_core::translation::{build_prompt, LanguageTag};

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HanjaStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidJson = 3,
    LengthMismatch = 4,
    UnknownLabel = 5,
    UnrecognizedPunctuation = 6,
    InvalidRegistry = 7,
    InvalidTag = 8,
    InvalidSpan = 9,
    UnsupportedDirection = 10,
    InvalidArgument = 11,
    Panic = 99,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HanjaRenderMode {
    Comprehensive = 0,
    Simple = 1,
    SimpleWithSpace = 2,
}

impl From<HanjaRenderMode> for RenderMode {
    fn from(m: HanjaRenderMode) -> Self {
        match m {
            HanjaRenderMode::Comprehensive => RenderMode::Comprehensive,
            HanjaRenderMode::Simple => RenderMode::Simple,
            HanjaRenderMode::SimpleWithSpace => RenderMode::SimpleWithSpace,
        }
    }
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HanjaLanguage {
    Hanja = 0,
    Korean = 1,
    English = 2,
}

impl From<HanjaLanguage> for LanguageTag {
    fn from(l: HanjaLanguage) -> Self {
        match l {
            HanjaLanguage::Hanja => LanguageTag::Hanja,
            HanjaLanguage::Korean => LanguageTag::Korean,
            HanjaLanguage::English => LanguageTag::English,
        }
    }
}

/// Opaque punctuation label registry.
pub struct HanjaRegistry(LabelRegistry);

/// Opaque glossary (readings, dictionary, link template).
pub struct HanjaGlossary(Glossary);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(HanjaStatus, String);

impl From<PunctError> for Failure {
    fn from(e: PunctError) -> Self {
        let status = match e {
            PunctError::LengthMismatch { .. } => HanjaStatus::LengthMismatch,
            PunctError::UnknownLabel(_) => HanjaStatus::UnknownLabel,
            _ => HanjaStatus::UnrecognizedPunctuation,
        };
        Failure(status, e.to_string())
    }
}

impl From<EntityError> for Failure {
    fn from(e: EntityError) -> Self {
        let status = match e {
            EntityError::UnknownTag(_) => HanjaStatus::InvalidTag,
            _ => HanjaStatus::InvalidSpan,
        };
        Failure(status, e.to_string())
    }
}

impl From<GlossaryError> for Failure {
    fn from(e: GlossaryError) -> Self {
        Failure(HanjaStatus::InvalidArgument, e.to_string())
    }
}

fn set_last_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).expect("no interior NUL");
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

/// Runs `f`, recording any error or panic as the thread's last error.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> HanjaStatus {
    LAST_ERROR.with(|slot| *slot.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => HanjaStatus::Ok,
        Ok(Err(Failure(status, message))) => {
            set_last_error(message);
            status
        }
        Err(_) => {
            set_last_error("internal panic".into());
            HanjaStatus::Panic
        }
    }
}

unsafe fn read_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure(HanjaStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(HanjaStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref()
        .ok_or_else(|| Failure(HanjaStatus::NullPointer, format!("{what} is null")))
}

fn parse_json<T: serde::de::DeserializeOwned>(s: &str, what: &str) -> Result<T, Failure> {
    serde_json::from_str(s).map_err(|e| Failure(HanjaStatus::InvalidJson, format!("{what}: {e}")))
}

unsafe fn write_out(out: *mut *mut c_char, value: String) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure(HanjaStatus::NullPointer, "output pointer is null".into()));
    }
    let c = CString::new(value).map_err(|_| Failure(HanjaStatus::InvalidArgument, "output contains NUL".into()))?;
    *out = c.into_raw();
    Ok(())
}

fn to_json<T: serde::Serialize>(value: &T) -> String {
    serde_json::to_string(value).expect("value serializes")
}

/// Message for the last failed call on this thread, or null. Owned by the
/// library; valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn hanja_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Frees a string returned by this library. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn hanja_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// The bundled 23-label registry. Never null.
#[no_mangle]
pub extern "C" fn hanja_registry_new_default() -> *mut HanjaRegistry {
    Box::into_raw(Box::new(HanjaRegistry(LabelRegistry::default())))
}

/// Loads a registry from TSV text (`id`, glyphs, simple projection).
#[no_mangle]
pub unsafe extern "C" fn hanja_registry_from_tsv(tsv: *const c_char, out: *mut *mut HanjaRegistry) -> HanjaStatus {
    guard(|| {
        if out.is_null() {
            return Err(Failure(HanjaStatus::NullPointer, "output pointer is null".into()));
        }
        let registry = LabelRegistry::from_tsv(read_str(tsv, "tsv")?)
            .map_err(|e| Failure(HanjaStatus::InvalidRegistry, e.to_string()))?;
        *out = Box::into_raw(Box::new(HanjaRegistry(registry)));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn hanja_registry_free(registry: *mut HanjaRegistry) {
    if !registry.is_null() {
        drop(Box::from_raw(registry));
    }
}

/// Number of labels, excluding `None`. Zero for a null handle.
#[no_mangle]
pub unsafe extern "C" fn hanja_registry_label_count(registry: *const HanjaRegistry) -> usize {
    registry
        .as_ref()
        .map_or(0, |r| r.0.labels().iter().filter(|l| !l.is_none()).count())
}

/// Renders `text` with one label per character (`labels_json` is a JSON
/// array of label ids).
#[no_mangle]
pub unsafe extern "C" fn hanja_apply_labels(
    registry: *const HanjaRegistry,
    text: *const c_char,
    labels_json: *const c_char,
    mode: HanjaRenderMode,
    out: *mut *mut c_char,
) -> HanjaStatus {
    guard(|| {
        let registry = handle(registry, "registry")?;
        let labels: Vec<String> = parse_json(read_str(labels_json, "labels")?, "labels")?;
        let rendered = registry.0.apply_labels(read_str(text, "text")?, &labels, mode.into())?;
        write_out(out, rendered)
    })
}

/// Character offset of each raw character in the rendered text, as a JSON
/// array.
#[no_mangle]
pub unsafe extern "C" fn hanja_align_offsets(
    registry: *const HanjaRegistry,
    text: *const c_char,
    labels_json: *const c_char,
    mode: HanjaRenderMode,
    out_json: *mut *mut c_char,
) -> HanjaStatus {
    guard(|| {
        let registry = handle(registry, "registry")?;
        let labels: Vec<String> = parse_json(read_str(labels_json, "labels")?, "labels")?;
        let offsets = registry.0.align_offsets(read_str(text, "text")?, &labels, mode.into())?;
        write_out(out_json, to_json(&offsets))
    })
}

/// Splits comprehensively punctuated text into raw text and labels.
#[no_mangle]
pub unsafe extern "C" fn hanja_strip_punctuation(
    registry: *const HanjaRegistry,
    punctuated: *const c_char,
    out_text: *mut *mut c_char,
    out_labels_json: *mut *mut c_char,
) -> HanjaStatus {
    guard(|| {
        let registry = handle(registry, "registry")?;
        if out_text.is_null() || out_labels_json.is_null() {
            return Err(Failure(HanjaStatus::NullPointer, "output pointer is null".into()));
        }
        let (text, labels) = registry.0.strip_punctuation(read_str(punctuated, "text")?)?;
        write_out(out_text, text)?;
        write_out(out_labels_json, to_json(&labels))
    })
}

/// IOB2 tags (JSON array of strings) to spans (JSON array of
/// `{"start","end","type"}`). Orphan `I-` tags open a new span.
#[no_mangle]
pub unsafe extern "C" fn hanja_iob2_decode(tags_json: *const c_char, out_spans_json: *mut *mut c_char) -> HanjaStatus {
    guard(|| {
        let raw: Vec<String> = parse_json(read_str(tags_json, "tags")?, "tags")?;
        let tags = parse_tags(&raw)?;
        write_out(out_spans_json, to_json(&decode_iob2(&tags)))
    })
}

/// Spans to a tag sequence of `length` tags.
#[no_mangle]
pub unsafe extern "C" fn hanja_iob2_encode(
    spans_json: *const c_char,
    length: usize,
    out_tags_json: *mut *mut c_char,
) -> HanjaStatus {
    guard(|| {
        let spans: Vec<EntitySpan> = parse_json(read_str(spans_json, "spans")?, "spans")?;
        let tags = encode_iob2(&spans, length)?;
        write_out(out_tags_json, to_json(&tags))
    })
}

/// The translation prompt for Hanja source text.
#[no_mangle]
pub unsafe extern "C" fn hanja_build_prompt(
    text: *const c_char,
    target: HanjaLanguage,
    out: *mut *mut c_char,
) -> HanjaStatus {
    guard(|| {
        let prompt = build_prompt(LanguageTag::Hanja, target.into(), read_str(text, "text")?)
            .map_err(|e| Failure(HanjaStatus::UnsupportedDirection, e.to_string()))?;
        write_out(out, prompt)
    })
}

/// Bundled glossary with the default link template. Never null.
#[no_mangle]
pub extern "C" fn hanja_glossary_new_default() -> *mut HanjaGlossary {
    Box::into_raw(Box::new(HanjaGlossary(Glossary::bundled())))
}

/// Bundled tables with a custom link template containing `{q}`.
#[no_mangle]
pub unsafe extern "C" fn hanja_glossary_with_template(template: *const c_char, out: *mut *mut HanjaGlossary) -> HanjaStatus {
    guard(|| {
        if out.is_null() {
            return Err(Failure(HanjaStatus::NullPointer, "output pointer is null".into()));
        }
        let mut glossary = Glossary::bundled();
        glossary.template = UrlTemplate::new(read_str(template, "template")?)?;
        *out = Box::into_raw(Box::new(HanjaGlossary(glossary)));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn hanja_glossary_free(glossary: *mut HanjaGlossary) {
    if !glossary.is_null() {
        drop(Box::from_raw(glossary));
    }
}

/// One entry per character as a JSON array of
/// `{"char","reading","definitions","link"}`.
#[no_mangle]
pub unsafe extern "C" fn hanja_glossary_annotate(
    glossary: *const HanjaGlossary,
    text: *const c_char,
    out_json: *mut *mut c_char,
) -> HanjaStatus {
    guard(|| {
        let glossary = handle(glossary, "glossary")?;
        write_out(out_json, to_json(&glossary.0.annotate(read_str(text, "text")?)))
    })
}

/// Dictionary link for exactly one character.
#[no_mangle]
pub unsafe extern "C" fn hanja_glossary_link(
    glossary: *const HanjaGlossary,
    character: *const c_char,
    out: *mut *mut c_char,
) -> HanjaStatus {
    guard(|| {
        let glossary = handle(glossary, "glossary")?;
        write_out(out, glossary.0.template.link(read_str(character, "character")?)?)
    })
}
