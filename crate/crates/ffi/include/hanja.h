#ifndef HANJA_H
#define HANJA_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call.
 */
typedef enum HanjaStatus {
  HANJA_STATUS_OK = 0,
  HANJA_STATUS_NULL_POINTER = 1,
  HANJA_STATUS_INVALID_UTF8 = 2,
  HANJA_STATUS_INVALID_JSON = 3,
  HANJA_STATUS_LENGTH_MISMATCH = 4,
  HANJA_STATUS_UNKNOWN_LABEL = 5,
  HANJA_STATUS_UNRECOGNIZED_PUNCTUATION = 6,
  HANJA_STATUS_INVALID_REGISTRY = 7,
  HANJA_STATUS_INVALID_TAG = 8,
  HANJA_STATUS_INVALID_SPAN = 9,
  HANJA_STATUS_UNSUPPORTED_DIRECTION = 10,
  HANJA_STATUS_INVALID_ARGUMENT = 11,
  HANJA_STATUS_PANIC = 99,
} HanjaStatus;

typedef enum HanjaRenderMode {
  HANJA_RENDER_MODE_COMPREHENSIVE = 0,
  HANJA_RENDER_MODE_SIMPLE = 1,
  HANJA_RENDER_MODE_SIMPLE_WITH_SPACE = 2,
} HanjaRenderMode;

typedef enum HanjaLanguage {
  HANJA_LANGUAGE_HANJA = 0,
  HANJA_LANGUAGE_KOREAN = 1,
  HANJA_LANGUAGE_ENGLISH = 2,
} HanjaLanguage;

/**
 * Opaque glossary (readings, dictionary, link template).
 */
typedef struct HanjaGlossary HanjaGlossary;

/**
 * Opaque punctuation label registry.
 */
typedef struct HanjaRegistry HanjaRegistry;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. Owned by the
 * library; valid until the next call on the same thread.
 */
const char *hanja_last_error_message(void);

/**
 * Frees a string returned by this library. Null is ignored.
 */
void hanja_string_free(char *s);

/**
 * The bundled 23-label registry. Never null.
 */
struct HanjaRegistry *hanja_registry_new_default(void);

/**
 * Loads a registry from TSV text (`id`, glyphs, simple projection).
 */
enum HanjaStatus hanja_registry_from_tsv(const char *tsv, struct HanjaRegistry **out);

void hanja_registry_free(struct HanjaRegistry *registry);

/**
 * Number of labels, excluding `None`. Zero for a null handle.
 */
size_t hanja_registry_label_count(const struct HanjaRegistry *registry);

/**
 * Renders `text` with one label per character (`labels_json` is a JSON
 * array of label ids).
 */
enum HanjaStatus hanja_apply_labels(const struct HanjaRegistry *registry,
                                    const char *text,
                                    const char *labels_json,
                                    enum HanjaRenderMode mode,
                                    char **out);

/**
 * Character offset of each raw character in the rendered text, as a JSON
 * array.
 */
enum HanjaStatus hanja_align_offsets(const struct HanjaRegistry *registry,
                                     const char *text,
                                     const char *labels_json,
                                     enum HanjaRenderMode mode,
                                     char **out_json);

/**
 * Splits comprehensively punctuated text into raw text and labels.
 */
enum HanjaStatus hanja_strip_punctuation(const struct HanjaRegistry *registry,
                                         const char *punctuated,
                                         char **out_text,
                                         char **out_labels_json);

/**
 * IOB2 tags (JSON array of strings) to spans (JSON array of
 * `{"start","end","type"}`). Orphan `I-` tags open a new span.
 */
enum HanjaStatus hanja_iob2_decode(const char *tags_json, char **out_spans_json);

/**
 * Spans to a tag sequence of `length` tags.
 */
enum HanjaStatus hanja_iob2_encode(const char *spans_json, size_t length, char **out_tags_json);

/**
 * The translation prompt for Hanja source text.
 */
enum HanjaStatus hanja_build_prompt(const char *text, enum HanjaLanguage target, char **out);

/**
 * Bundled glossary with the default link template. Never null.
 */
struct HanjaGlossary *hanja_glossary_new_default(void);

/**
 * Bundled tables with a custom link template containing `{q}`.
 */
enum HanjaStatus hanja_glossary_with_template(const char *template_, struct HanjaGlossary **out);

void hanja_glossary_free(struct HanjaGlossary *glossary);

/**
 * One entry per character as a JSON array of
 * `{"char","reading","definitions","link"}`.
 */
enum HanjaStatus hanja_glossary_annotate(const struct HanjaGlossary *glossary,
                                         const char *text,
                                         char **out_json);

/**
 * Dictionary link for exactly one character.
 */
enum HanjaStatus hanja_glossary_link(const struct HanjaGlossary *glossary,
                                     const char *character,
                                     char **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HANJA_H */
