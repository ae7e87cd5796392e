#pragma once

#include <string>
#include <vector>

#include "meta4/data/types.hpp"

namespace meta4::eval {

// All four regression metrics flatten their inputs and compare elementwise.
double rmse(const std::vector<double>& pred, const std::vector<double>& gt);
double mae(const std::vector<double>& pred, const std::vector<double>& gt);
// Errors on zero variance of either side.
double pcc(const std::vector<double>& pred, const std::vector<double>& gt);
// Errors on a zero vector on either side.
double cosine_similarity(const std::vector<double>& pred,
                         const std::vector<double>& gt);

struct ClassRow {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    size_t support = 0;  // ground-truth count
    bool absent = false;  // class never appears in gt or predictions
};

struct ClassificationReport {
    std::vector<ClassRow> per_class;  // indexed by SchemaLabel value
    double accuracy = 0.0;
    double macro_f1 = 0.0;  // mean F1 over classes present in gt
};

ClassificationReport classification_report(
    const std::vector<data::SchemaLabel>& pred,
    const std::vector<data::SchemaLabel>& gt);

std::string format_classification_report(const ClassificationReport& report);

}  // namespace meta4::eval
