#pragma once

#include "expode/types.hpp"

#include <any>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace expode {

/// Opaque carrier for function_handle and struct typed option values
/// (callbacks, custom evaluators, user-built schemes).
struct Handle {
    std::any value;

    bool empty() const { return !value.has_value(); }
};

using OptionValue =
    std::variant<std::monostate, double, Vec, Mat, bool, std::string, Handle>;

/// One alternative of an option's type union.
struct OptionAlt {
    enum class Kind { numeric, boolean, list, text, structure, function_handle };
    enum class Shape { scalar, vector, matrix };
    enum class Sign { any, positive, non_negative, negative, non_positive };

    Kind kind = Kind::numeric;
    Shape shape = Shape::scalar;
    Sign sign = Sign::any;
    bool integer = false;

    static OptionAlt scalar(Sign s = Sign::any, bool integer = false);
    static OptionAlt vector(Sign s = Sign::any, bool integer = false);
    static OptionAlt matrix(Sign s = Sign::any, bool integer = false);
    static OptionAlt index();    // positive integer scalar
    static OptionAlt indices();  // positive integer vector
    static OptionAlt boolean();
    static OptionAlt list();
    static OptionAlt text();
    static OptionAlt structure();
    static OptionAlt function_handle();

    std::string display() const; // e.g. "positive integer vector"
};

struct ListValue {
    std::string name;
    std::optional<double> numeric; // printed in parentheses when present
};

struct OptionDesc {
    std::string name;
    std::string short_desc;
    std::vector<OptionAlt> alts;          // display order
    OptionValue default_value;            // monostate means "auto"
    std::vector<ListValue> list_values;   // for list alternatives
    std::vector<std::string> long_desc;
    std::vector<std::string> see_also;
    std::string rename_to;                // applied during validation

    /// First info line: "Name - short [ alt | alt {default} ]".
    std::string info_line() const;
};

/// Ordered option catalog for one integrator (or the generic dispatcher).
const std::vector<OptionDesc>& option_catalog(const std::string& integrator);

/// Known integrator names, in catalog order.
const std::vector<std::string>& integrator_names();

/// Looks an option up in an integrator's catalog; nullptr when unknown.
const OptionDesc* find_option(const std::string& integrator, const std::string& name);

/// User-facing option set. Values are type-checked when set.
class OptionsSet {
public:
    explicit OptionsSet(std::string integrator = "");

    const std::string& integrator() const { return integrator_; }
    void set_integrator(std::string name);

    /// Validates against the catalog and stores; later sets override.
    void set(const std::string& name, OptionValue value);

    bool has(const std::string& name) const;
    const OptionValue* get(const std::string& name) const;
    const std::map<std::string, OptionValue>& entries() const { return values_; }

private:
    std::string integrator_;
    std::map<std::string, OptionValue> values_;
};

/// Fully evaluated options: every catalog entry present, list/boolean
/// values reduced to numeric indices, renames applied.
struct NormalizedOptions {
    std::string integrator;
    std::map<std::string, OptionValue> raw;
    bool constant_step = false;

    bool is_auto(const std::string& name) const;
    double number(const std::string& name) const;
    Vec numbers(const std::string& name) const; // scalar broadcast to size-1 vector
    bool flag(const std::string& name) const;   // boolean option, normalized 0/1
    int list_index(const std::string& name) const;
    double list_numeric(const std::string& name) const; // paren value or index
    std::string list_name(const std::string& name) const;
    const Handle* handle(const std::string& name) const; // nullptr unless a Handle is stored
};

/// Evaluates an options set for an integrator; `integrator` overrides the
/// set's own name and, failing both, the Integrator option decides.
NormalizedOptions validate(const OptionsSet& opts, const std::string& integrator = "");

/// expode's info command: one line per option, or the long description of
/// a single option; opt_name "-" prints all long descriptions.
std::string info(const std::string& integrator, const std::string& opt_name = "");

/// Parses "Name = value" config-file text into set() calls.
/// '#' starts a comment; vectors as "[a, b, c]"; booleans as on/off.
void apply_options_text(OptionsSet& opts, std::istream& in);
OptionValue parse_option_text(const std::string& text);

} // namespace expode
