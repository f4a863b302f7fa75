#include "rcspa/specfile.hpp"

#include <json.hpp>

#include <fstream>
#include <sstream>

namespace rcspa {
namespace {

using json = nlohmann::ordered_json;

[[noreturn]] void fail(const std::string& where, const std::string& what) {
    throw ParseError(where + ": " + what);
}

const json& field(const json& obj, const char* key, const std::string& where) {
    if (!obj.is_object()) fail(where, "expected an object");
    auto it = obj.find(key);
    if (it == obj.end()) fail(where, std::string("missing field '") + key + "'");
    return *it;
}

double number(const json& v, const std::string& where) {
    if (!v.is_number()) fail(where, "expected a number");
    return v.get<double>();
}

int integer(const json& v, const std::string& where) {
    if (!v.is_number_integer()) fail(where, "expected an integer");
    return v.get<int>();
}

std::string text(const json& v, const std::string& where) {
    if (!v.is_string()) fail(where, "expected a string");
    return v.get<std::string>();
}

const json& array(const json& v, const std::string& where) {
    if (!v.is_array()) fail(where, "expected an array");
    return v;
}

CgfExpr parse_cgf(const json& node, const std::string& where) {
    const std::string kind = text(field(node, "kind", where), where + ".kind");
    std::vector<double> params;
    if (node.contains("params")) {
        const json& ps = array(node["params"], where + ".params");
        for (std::size_t i = 0; i < ps.size(); ++i)
            params.push_back(number(ps[i], where + ".params[" + std::to_string(i) + "]"));
    }
    std::vector<CgfExpr> children;
    if (node.contains("children")) {
        const json& cs = array(node["children"], where + ".children");
        for (std::size_t i = 0; i < cs.size(); ++i)
            children.push_back(parse_cgf(cs[i], where + ".children[" + std::to_string(i) + "]"));
    }
    try {
        return make_builtin(kind, params, children);
    } catch (const Error& e) {
        fail(where, e.what());
    }
}

std::vector<ValueType> parse_types(const json& v, const std::string& where) {
    const json& a = array(v, where);
    std::vector<ValueType> out;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const std::string w = where + "[" + std::to_string(i) + "]";
        try {
            out.push_back(value_type_from_string(text(a[i], w)));
        } catch (const ParseError&) {
            throw;
        } catch (const Error& e) {
            fail(w, e.what());
        }
    }
    return out;
}

json cgf_to_json(const CgfExpr& e) {
    const CgfDescriptor d = e.descriptor();
    json j;
    j["kind"] = d.kind;
    j["params"] = d.params;
    if (!d.children.empty()) {
        json cs = json::array();
        for (const auto& c : d.children) cs.push_back(cgf_to_json(c));
        j["children"] = cs;
    }
    return j;
}

}  // namespace

ProcessSpec parse_spec(const std::string& doc_text) {
    json doc;
    try {
        doc = json::parse(doc_text);
    } catch (const json::parse_error& e) {
        throw ParseError(std::string("document: ") + e.what());
    }
    if (!doc.is_object()) fail("document", "expected an object");
    const int version = integer(field(doc, "schema_version", "document"), "schema_version");
    if (version != kSpecSchemaVersion)
        fail("schema_version", "unsupported version " + std::to_string(version));

    std::string name;
    if (doc.contains("name")) name = text(doc["name"], "name");
    const json& x0j = array(field(doc, "x0", "document"), "x0");
    Vector x0(static_cast<Eigen::Index>(x0j.size()));
    for (std::size_t i = 0; i < x0j.size(); ++i)
        x0[static_cast<Eigen::Index>(i)] = number(x0j[i], "x0[" + std::to_string(i) + "]");
    if (doc.contains("d0") && integer(doc["d0"], "d0") != x0.size())
        fail("d0", "does not match the length of x0");
    const std::vector<ValueType> x0_types = parse_types(field(doc, "x0_types", "document"), "x0_types");

    const json& sj = array(field(doc, "steps", "document"), "steps");
    std::vector<StepSpec> steps;
    for (std::size_t n = 0; n < sj.size(); ++n) {
        const std::string w = "steps[" + std::to_string(n) + "]";
        const json& s = sj[n];
        StepSpec st;
        st.dim = integer(field(s, "dim", w), w + ".dim");
        st.types = parse_types(field(s, "types", w), w + ".types");
        st.innovation = parse_cgf(field(s, "innovation", w), w + ".innovation");
        if (s.contains("contributions")) {
            const json& cj = array(s["contributions"], w + ".contributions");
            for (std::size_t c = 0; c < cj.size(); ++c) {
                const std::string wc = w + ".contributions[" + std::to_string(c) + "]";
                Contribution ct;
                ct.source_step = integer(field(cj[c], "from_step", wc), wc + ".from_step");
                ct.source_coord = integer(field(cj[c], "from_coord", wc), wc + ".from_coord") - 1;
                const std::string kind = text(field(cj[c], "kind", wc), wc + ".kind");
                try {
                    ct.kind = contribution_kind_from_string(kind);
                } catch (const Error& e) {
                    fail(wc + ".kind", e.what());
                }
                ct.unit = parse_cgf(field(cj[c], "unit", wc), wc + ".unit");
                st.contributions.push_back(std::move(ct));
            }
        }
        steps.push_back(std::move(st));
    }
    try {
        return ProcessSpec(std::move(x0), x0_types, std::move(steps), std::move(name));
    } catch (const Error& e) {
        throw ParseError(std::string("process: ") + e.what());
    }
}

ProcessSpec load_spec_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError(path + ": cannot open");
    std::ostringstream ss;
    ss << in.rdbuf();
    try {
        return parse_spec(ss.str());
    } catch (const ParseError& e) {
        throw ParseError(path + ": " + e.what());
    }
}

std::string serialize_spec(const ProcessSpec& process) {
    json doc;
    doc["schema_version"] = kSpecSchemaVersion;
    doc["name"] = process.name();
    doc["d0"] = process.dim(0);
    doc["x0"] = std::vector<double>(process.x0().data(), process.x0().data() + process.x0().size());
    json types = json::array();
    for (ValueType t : process.types(0)) types.push_back(to_string(t));
    doc["x0_types"] = types;
    json steps = json::array();
    for (int n = 1; n <= process.steps(); ++n) {
        const StepSpec& st = process.step(n);
        json s;
        s["dim"] = st.dim;
        json ts = json::array();
        for (ValueType t : st.types) ts.push_back(to_string(t));
        s["types"] = ts;
        s["innovation"] = cgf_to_json(st.innovation);
        json cs = json::array();
        for (const Contribution& c : st.contributions) {
            json cj;
            cj["from_step"] = c.source_step;
            cj["from_coord"] = c.source_coord + 1;
            cj["kind"] = to_string(c.kind);
            cj["unit"] = cgf_to_json(c.unit);
            cs.push_back(cj);
        }
        s["contributions"] = cs;
        steps.push_back(s);
    }
    doc["steps"] = steps;
    return doc.dump(2) + "\n";
}

}  // namespace rcspa
