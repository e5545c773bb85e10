#pragma once

// Output-alignment losses between a reference model's logits (fine-tuned) and a compared
// model's logits, row per example.

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "tsw/autodiff.hpp"
#include "tsw/error.hpp"

namespace tsw {

template <class S>
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<S> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, S(0.0)) {}

    S& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    const S& operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
    std::span<const S> row(std::size_t r) const { return {data.data() + r * cols, cols}; }
};

using OutputBatch = Matrix<double>;

enum class Ppl { Kl, Mse, Cka };

Ppl parse_ppl(const std::string& name);
std::string to_string(Ppl ppl);
// Lambda presets per loss kind.
std::vector<double> lambda_presets(Ppl ppl);

inline void require_same_shape(std::size_t r1, std::size_t c1, std::size_t r2, std::size_t c2) {
    if (r1 != r2 || c1 != c2) {
        throw StructuralError("output batches differ in shape");
    }
}

/// (T^2 / B) * sum_i KL(softmax(ref_i / T) || softmax(cmp_i / T)).
template <class S>
S kl_loss(const OutputBatch& ref, const Matrix<S>& cmp, double temperature) {
    require_same_shape(ref.rows, ref.cols, cmp.rows, cmp.cols);
    if (!(temperature > 0.0)) {
        throw DomainError("KL temperature must be positive");
    }
    std::vector<S> terms;
    terms.reserve(ref.rows);
    std::vector<double> r(ref.cols);
    std::vector<double> q(ref.cols);
    std::vector<S> c(ref.cols);
    for (std::size_t i = 0; i < ref.rows; ++i) {
        for (std::size_t j = 0; j < ref.cols; ++j) {
            r[j] = ref(i, j) / temperature;
            c[j] = cmp(i, j) / S(temperature);
        }
        const double lse_r = ad::log_sum_exp(std::span<const double>(r));
        const S lse_c = ad::log_sum_exp(std::span<const S>(c));
        // sum_j q_j (log q_j - log p_j) = sum_j q_j log q_j - sum_j q_j c_j + lse_c
        double neg_entropy = 0.0;
        for (std::size_t j = 0; j < ref.cols; ++j) {
            q[j] = std::exp(r[j] - lse_r);
            neg_entropy += q[j] * (r[j] - lse_r);
        }
        terms.push_back(S(neg_entropy) - ad::dot(std::span<const S>(c), std::span<const double>(q)) + lse_c);
    }
    const double factor = temperature * temperature / static_cast<double>(ref.rows);
    return S(factor) * ad::sum(std::span<const S>(terms));
}

/// (1 / B) * sum_i ||ref_i - cmp_i||^2.
template <class S>
S mse_loss(const OutputBatch& ref, const Matrix<S>& cmp) {
    require_same_shape(ref.rows, ref.cols, cmp.rows, cmp.cols);
    std::vector<S> sq;
    sq.reserve(ref.data.size());
    for (std::size_t k = 0; k < ref.data.size(); ++k) {
        sq.push_back(ad::square(cmp.data[k] - S(ref.data[k])));
    }
    return ad::sum(std::span<const S>(sq)) / S(static_cast<double>(ref.rows));
}

template <class S>
struct CkaLoss {
    S loss;
    bool degenerate = false;
};

namespace detail {

// Column-centred copy (H X with H = I - 11^T / B).
template <class S>
Matrix<S> centre_columns(const Matrix<S>& x) {
    Matrix<S> out(x.rows, x.cols);
    std::vector<S> col(x.rows);
    for (std::size_t j = 0; j < x.cols; ++j) {
        for (std::size_t i = 0; i < x.rows; ++i) {
            col[i] = x(i, j);
        }
        const S mean = ad::sum(std::span<const S>(col)) / S(static_cast<double>(x.rows));
        for (std::size_t i = 0; i < x.rows; ++i) {
            out(i, j) = x(i, j) - mean;
        }
    }
    return out;
}

// ||A^T B||_F^2 for column-centred A, B.
template <class S>
S cross_frobenius_sq(const Matrix<S>& a, const Matrix<S>& b) {
    std::vector<S> entries;
    std::vector<S> ca(a.rows), cb(b.rows);
    for (std::size_t p = 0; p < a.cols; ++p) {
        for (std::size_t i = 0; i < a.rows; ++i) {
            ca[i] = a(i, p);
        }
        for (std::size_t q = 0; q < b.cols; ++q) {
            for (std::size_t i = 0; i < b.rows; ++i) {
                cb[i] = b(i, q);
            }
            entries.push_back(ad::square(ad::dot(std::span<const S>(ca), std::span<const S>(cb))));
        }
    }
    return ad::sum(std::span<const S>(entries));
}

}  // namespace detail

/// 1 - ||F^T H G||_F^2 / (||F^T H F||_F ||G^T H G||_F). A zero-variance side makes the
/// denominator vanish; that case returns loss 1 and sets the degenerate flag.
template <class S>
CkaLoss<S> cka_loss(const OutputBatch& ref, const Matrix<S>& cmp) {
    require_same_shape(ref.rows, ref.cols, cmp.rows, cmp.cols);
    if (ref.rows < 2) {
        throw DomainError("CKA needs at least two rows");
    }
    Matrix<S> f(ref.rows, ref.cols);
    for (std::size_t k = 0; k < ref.data.size(); ++k) {
        f.data[k] = S(ref.data[k]);
    }
    const auto hf = detail::centre_columns(f);
    const auto hg = detail::centre_columns(cmp);
    const S cross = detail::cross_frobenius_sq(hf, hg);
    const S self_f = detail::cross_frobenius_sq(hf, hf);
    const S self_g = detail::cross_frobenius_sq(hg, hg);
    if (!(ad::value_of(self_f) > 0.0) || !(ad::value_of(self_g) > 0.0)) {
        return CkaLoss<S>{S(1.0), true};
    }
    return CkaLoss<S>{S(1.0) - cross / (ad::sqrt(self_f) * ad::sqrt(self_g)), false};
}

}  // namespace tsw
