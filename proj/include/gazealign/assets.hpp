#pragma once

namespace gazealign {

// Embedded copies of the files under assets/. The files are the source of
// truth; equality is checked in tests.
const char* builtin_region_atlas_json();
const char* builtin_prompt_template_json();

}  // namespace gazealign
