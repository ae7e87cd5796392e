#include "meta4/eval/metrics.hpp"

#include <cmath>
#include <cstdio>

#include "meta4/core/error.hpp"

namespace meta4::eval {

namespace {

void check_shapes(const std::vector<double>& a, const std::vector<double>& b,
                  const char* op) {
    require(!a.empty(), op, ": empty input");
    require(a.size() == b.size(), op, ": length mismatch ", a.size(), " vs ",
            b.size());
}

}  // namespace

double rmse(const std::vector<double>& pred, const std::vector<double>& gt) {
    check_shapes(pred, gt, "rmse");
    double acc = 0.0;
    for (size_t i = 0; i < pred.size(); ++i) {
        double d = pred[i] - gt[i];
        acc += d * d;
    }
    return std::sqrt(acc / static_cast<double>(pred.size()));
}

double mae(const std::vector<double>& pred, const std::vector<double>& gt) {
    check_shapes(pred, gt, "mae");
    double acc = 0.0;
    for (size_t i = 0; i < pred.size(); ++i) {
        acc += std::abs(pred[i] - gt[i]);
    }
    return acc / static_cast<double>(pred.size());
}

double pcc(const std::vector<double>& pred, const std::vector<double>& gt) {
    check_shapes(pred, gt, "pcc");
    require(pred.size() >= 2, "pcc: need at least 2 elements");
    double n = static_cast<double>(pred.size());
    double ma = 0.0, mb = 0.0;
    for (size_t i = 0; i < pred.size(); ++i) {
        ma += pred[i];
        mb += gt[i];
    }
    ma /= n;
    mb /= n;
    double cov = 0.0, va = 0.0, vb = 0.0;
    for (size_t i = 0; i < pred.size(); ++i) {
        double da = pred[i] - ma, db = gt[i] - mb;
        cov += da * db;
        va += da * da;
        vb += db * db;
    }
    require(va > 0.0 && vb > 0.0, "pcc: undefined for zero-variance input");
    return cov / std::sqrt(va * vb);
}

double cosine_similarity(const std::vector<double>& pred,
                         const std::vector<double>& gt) {
    check_shapes(pred, gt, "cosine_similarity");
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (size_t i = 0; i < pred.size(); ++i) {
        dot += pred[i] * gt[i];
        na += pred[i] * pred[i];
        nb += gt[i] * gt[i];
    }
    require(na > 0.0 && nb > 0.0,
            "cosine_similarity: undefined for a zero vector");
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

ClassificationReport classification_report(
    const std::vector<data::SchemaLabel>& pred,
    const std::vector<data::SchemaLabel>& gt) {
    require(!gt.empty(), "classification_report: empty input");
    require(pred.size() == gt.size(), "classification_report: ", pred.size(),
            " predictions vs ", gt.size(), " labels");

    const size_t k = data::kNumSchemaClasses;
    std::vector<size_t> tp(k, 0), fp(k, 0), fn(k, 0);
    size_t correct = 0;
    for (size_t i = 0; i < gt.size(); ++i) {
        auto p = static_cast<size_t>(pred[i]);
        auto g = static_cast<size_t>(gt[i]);
        require(p < k && g < k, "classification_report: label out of range");
        if (p == g) {
            ++tp[g];
            ++correct;
        } else {
            ++fp[p];
            ++fn[g];
        }
    }

    ClassificationReport report;
    report.per_class.resize(k);
    double f1_sum = 0.0;
    size_t present = 0;
    for (size_t c = 0; c < k; ++c) {
        ClassRow& row = report.per_class[c];
        row.support = tp[c] + fn[c];
        row.absent = tp[c] + fp[c] + fn[c] == 0;
        double denom_p = static_cast<double>(tp[c] + fp[c]);
        double denom_r = static_cast<double>(tp[c] + fn[c]);
        row.precision = denom_p > 0.0 ? static_cast<double>(tp[c]) / denom_p
                                      : 0.0;
        row.recall = denom_r > 0.0 ? static_cast<double>(tp[c]) / denom_r
                                   : 0.0;
        row.f1 = row.precision + row.recall > 0.0
                     ? 2.0 * row.precision * row.recall /
                           (row.precision + row.recall)
                     : 0.0;
        if (row.support > 0) {
            f1_sum += row.f1;
            ++present;
        }
    }
    report.accuracy =
        static_cast<double>(correct) / static_cast<double>(gt.size());
    report.macro_f1 = present > 0 ? f1_sum / static_cast<double>(present) : 0.0;
    return report;
}

std::string format_classification_report(const ClassificationReport& report) {
    std::string out = "class              precision  recall      f1  support\n";
    char buf[160];
    const auto& names = data::schema_label_names();
    for (size_t c = 0; c < report.per_class.size(); ++c) {
        const ClassRow& row = report.per_class[c];
        std::snprintf(buf, sizeof(buf), "%-18s %9.4f %7.4f %7.4f %8zu%s\n",
                      names[c].c_str(), row.precision, row.recall, row.f1,
                      row.support, row.absent ? "  (absent)" : "");
        out += buf;
    }
    std::snprintf(buf, sizeof(buf),
                  "accuracy %.4f   macro-f1 %.4f\n", report.accuracy,
                  report.macro_f1);
    out += buf;
    return out;
}

}  // namespace meta4::eval
