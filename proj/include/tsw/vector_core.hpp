#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace tsw {

struct Module {
    std::string name;
    std::vector<double> values;
};

/// Ordered, uniquely named set of flattened weight vectors.
class ParamSet {
public:
    ParamSet() = default;

    void add(std::string name, std::vector<double> values);

    const std::vector<Module>& modules() const noexcept { return modules_; }
    std::vector<Module>& modules() noexcept { return modules_; }
    std::size_t size() const noexcept { return modules_.size(); }
    std::size_t total_size() const noexcept;

    const Module& at(std::size_t i) const { return modules_.at(i); }
    Module& at(std::size_t i) { return modules_.at(i); }
    const Module* find(std::string_view name) const noexcept;

    // Throws StructuralError naming the first module that differs in name or length.
    void require_aligned(const ParamSet& other) const;

    friend bool operator==(const ParamSet& a, const ParamSet& b) noexcept;

private:
    std::vector<Module> modules_;
};

struct TaskVector {
    std::string task_id;
    ParamSet delta;
};

struct SignedBounds {
    double v_min_pos = 0.0;
    double v_max_pos = 0.0;
    double v_min_neg = 0.0;
    double v_max_neg = 0.0;
    bool has_pos = false;
    bool has_neg = false;
};

enum class Sign { Positive, Negative };

TaskVector diff(const ParamSet& fine_tuned, const ParamSet& base, std::string task_id = {});

// base + scale * delta, module by module.
ParamSet apply_delta(const ParamSet& base, const ParamSet& delta, double scale = 1.0);

SignedBounds signed_bounds(std::span<const double> v) noexcept;

/// Nearest-rank threshold on one sign class. For Positive, exactly floor(alpha*m) of the
/// m positives satisfy x <= gamma (absent ties); survivors are x > gamma. Negative mirrors
/// this with survivors x < gamma. Returns nullopt when the sign class is empty.
std::optional<double> sign_quantile(std::span<const double> v, double alpha, Sign sign);

double l2_norm(std::span<const double> v) noexcept;

// Debug text form: "module <name> <n>" followed by one line of values.
void write_text(std::ostream& os, const ParamSet& params);
ParamSet read_text(std::istream& is);

}  // namespace tsw
