#pragma once

// Compiled-in copies of the data files under data/, generated at configure
// time so a bare binary works without locating the originals on disk.
namespace timegate::data {

extern const char* const python_release_calendar_csv;
extern const char* const default_agent_system_prompt;

} // namespace timegate::data
