#include "mtsk/impute.hpp"

#include "mtsk/common.hpp"

#include <algorithm>
#include <cctype>

namespace mtsk {

namespace {

std::string method_name(ImputeMethod m) {
  switch (m) {
    case ImputeMethod::Mean: return "mean";
    case ImputeMethod::Locf: return "locf";
    case ImputeMethod::Zero: return "zero";
  }
  return "?";
}

}  // namespace

std::string imputation_name(ImputationChoice choice) {
  return method_name(choice.method) + (choice.bias_correct ? "+bc" : "");
}

std::string ImputationSpec::name() const { return imputation_name({method, bias_correct}); }

ImputationChoice parse_imputation(const std::string& text) {
  std::string t;
  for (char c : text) t += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  ImputationChoice choice{ImputeMethod::Mean, false};
  if (t.size() > 3 && t.ends_with("+bc")) {
    choice.bias_correct = true;
    t.resize(t.size() - 3);
  }
  if (t == "mean") choice.method = ImputeMethod::Mean;
  else if (t == "locf") choice.method = ImputeMethod::Locf;
  else if (t == "zero" || t == "0") choice.method = ImputeMethod::Zero;
  else throw Error("unknown imputation '" + text + "'");
  return choice;
}

std::vector<ImputationChoice> all_imputations() {
  return {{ImputeMethod::Mean, false}, {ImputeMethod::Mean, true},
          {ImputeMethod::Locf, false}, {ImputeMethod::Locf, true},
          {ImputeMethod::Zero, false}, {ImputeMethod::Zero, true}};
}

ImputationSpec fit_imputer(const Cohort& train, ImputeMethod method, bool bias_correct) {
  ImputationSpec spec;
  spec.method = method;
  spec.bias_correct = bias_correct;
  spec.attributes = train.attributes();
  if (method == ImputeMethod::Zero) return spec;

  const int V = train.attributes();
  spec.train_attribute_means.assign(V, 0.0);
  for (int v = 0; v < V; ++v) {
    double sum = 0;
    std::size_t n = 0;
    for (const auto& s : train.samples())
      for (Eigen::Index t = 0; t < s.length(); ++t)
        if (s.observed(v, t)) {
          sum += s.values(v, t);
          ++n;
        }
    if (n == 0)
      throw Error("attribute '" + train.attribute_names()[v] +
                  "' has no observed training cells; cannot fit imputer");
    spec.train_attribute_means[v] = sum / static_cast<double>(n);
  }
  return spec;
}

Cohort impute(const ImputationSpec& spec, const Cohort& cohort) {
  const int V = cohort.attributes();
  if (spec.bias_correct && V == 2 * spec.attributes && V != 0)
    throw Error("cohort already carries stacked indicators; bias correction applies to raw cohorts");
  if (V != spec.attributes)
    throw Error("imputer fitted on " + std::to_string(spec.attributes) +
                " attributes, cohort has " + std::to_string(V));
  if (spec.method != ImputeMethod::Zero &&
      static_cast<int>(spec.train_attribute_means.size()) != V)
    throw Error("imputer has no training means");

  const int T = cohort.window_length();
  std::vector<MTSample> out;
  out.reserve(cohort.size());
  for (const auto& s : cohort.samples()) {
    Matrix filled = s.values;
    for (int v = 0; v < V; ++v) {
      double last = 0.0;
      bool have_last = false;
      for (int t = 0; t < T; ++t) {
        if (s.observed(v, t)) {
          last = s.values(v, t);
          have_last = true;
          continue;
        }
        switch (spec.method) {
          case ImputeMethod::Mean: filled(v, t) = spec.train_attribute_means[v]; break;
          case ImputeMethod::Zero: filled(v, t) = 0.0; break;
          case ImputeMethod::Locf:
            filled(v, t) = have_last ? last : spec.train_attribute_means[v];
            break;
        }
      }
    }
    MTSample x;
    x.id = s.id;
    x.label = s.label;
    if (spec.bias_correct) {
      x.values.resize(2 * V, T);
      x.values.topRows(V) = filled;
      x.values.bottomRows(V) = s.mask.cast<double>().matrix();
      x.mask = Mask::Ones(2 * V, T);
    } else {
      x.values = std::move(filled);
      x.mask = Mask::Ones(V, T);
    }
    out.push_back(std::move(x));
  }

  std::vector<std::string> names = cohort.attribute_names();
  if (spec.bias_correct)
    for (int v = 0; v < V; ++v) names.push_back(cohort.attribute_names()[v] + "_observed");
  return Cohort(std::move(names), T, std::move(out));
}

}  // namespace mtsk
