#include "mixsup/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>

#include <json.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "mixsup/error.hpp"
#include "mixsup/kernels.hpp"
#include "mixsup/model.hpp"
#include "mixsup/trainer.hpp"

namespace mixsup {

namespace fs = std::filesystem;

DenseMask binarize(const PredictionMap& pred, double threshold) {
    if (!(threshold > 0.0 && threshold < 1.0)) {
        throw Error(Errc::InvalidConfig, "threshold must lie in (0, 1)");
    }
    DenseMask out(pred.height(), pred.width());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = pred.probs()[i] > threshold ? 1 : 0;
    return out;
}

namespace {

struct Overlap {
    std::size_t pred = 0;
    std::size_t gt = 0;
    std::size_t both = 0;
};

Overlap overlap(const DenseMask& pred, const DenseMask& gt) {
    if (!pred.same_shape(gt)) {
        throw Error(Errc::ShapeMismatch, "masks " + std::to_string(pred.height()) + "x" + std::to_string(pred.width()) +
                                             " and " + std::to_string(gt.height()) + "x" + std::to_string(gt.width()));
    }
    Overlap o;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const bool p = pred[i] != 0;
        const bool g = gt[i] != 0;
        o.pred += p;
        o.gt += g;
        o.both += p && g;
    }
    return o;
}

}  // namespace

double dice_coeff(const DenseMask& pred, const DenseMask& gt) {
    const auto o = overlap(pred, gt);
    if (o.pred + o.gt == 0) return 1.0;
    return 2.0 * static_cast<double>(o.both) / static_cast<double>(o.pred + o.gt);
}

double iou(const DenseMask& pred, const DenseMask& gt) {
    const auto o = overlap(pred, gt);
    const auto uni = o.pred + o.gt - o.both;
    if (uni == 0) return 1.0;
    return static_cast<double>(o.both) / static_cast<double>(uni);
}

double weighted_average(std::span<const WeightedValue> items) {
    if (items.empty()) throw Error(Errc::EmptyInput, "weighted average of nothing");
    double num = 0.0;
    double den = 0.0;
    for (const auto& it : items) {
        if (!(it.count > 0.0)) throw Error(Errc::InvalidConfig, "weighted average needs positive counts");
        num += it.count * it.value;
        den += it.count;
    }
    return num / den;
}

Predictor model_predictor(const Model& model) {
    return [&model](const ImageTensor& image) {
        auto round16 = [](int v) {
            constexpr int kDiv = ModelConfig::kInputSizeDivisor;
            return std::max(kDiv, (v + kDiv / 2) / kDiv * kDiv);
        };
        const int h = round16(image.height());
        const int w = round16(image.width());
        if (h == image.height() && w == image.width()) return model.predict(image);
        ImageTensor input(h, w, image.channels());
        kernels::parallel::bilinear_resize(image.channels(), image.height(), image.width(), image.values(), h, w,
                                           input.values());
        const auto pred = model.predict(input);
        Grid<float> probs(h, w);
        for (std::size_t i = 0; i < probs.size(); ++i) probs[i] = static_cast<float>(pred.probs()[i]);
        Grid<float> native(image.height(), image.width());
        kernels::parallel::bilinear_resize(1, h, w, probs.values(), image.height(), image.width(), native.values());
        Grid<double> out(image.height(), image.width());
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = native[i];
        return PredictionMap::from_probs(out);
    };
}

MetricsReport evaluate(const Predictor& predictor, std::span<const Dataset> test_sets, double threshold) {
    if (test_sets.empty()) throw Error(Errc::EmptyInput, "no test datasets");
    MetricsReport report;
    report.threshold = threshold;
    std::vector<WeightedValue> dice_items;
    std::vector<WeightedValue> iou_items;
    for (const auto& ds : test_sets) {
        if (ds.kind != SupervisionKind::Pixel) {
            throw Error(Errc::InvalidConfig, "test dataset '" + ds.name + "' is not pixel-kind");
        }
        if (ds.samples.empty()) throw Error(Errc::EmptyDataset, "test dataset '" + ds.name + "' is empty");
        double dice_sum = 0.0;
        double iou_sum = 0.0;
        for (const auto& s : ds.samples) {
            const auto& gt = std::get<DenseMask>(s.payload);
            const auto pred = binarize(predictor(s.image), threshold);
            dice_sum += dice_coeff(pred, gt);
            iou_sum += iou(pred, gt);
        }
        const auto n = static_cast<double>(ds.samples.size());
        report.datasets.push_back({ds.name, ds.samples.size(), dice_sum / n, iou_sum / n});
        dice_items.push_back({n, dice_sum / n});
        iou_items.push_back({n, iou_sum / n});
    }
    report.wavg_dice = weighted_average(dice_items);
    report.wavg_iou = weighted_average(iou_items);
    return report;
}

std::vector<std::size_t> report_row_order(const MetricsReport& report) {
    static constexpr std::array<const char*, 5> kBenchmarkOrder{"ColonDB", "Kvasir", "ClinicDB", "EndoScene", "ETIS"};
    auto lower = [](std::string s) {
        std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
        return s;
    };
    std::vector<std::size_t> order;
    std::vector<bool> used(report.datasets.size(), false);
    for (const char* name : kBenchmarkOrder) {
        for (std::size_t i = 0; i < report.datasets.size(); ++i) {
            if (!used[i] && lower(report.datasets[i].name) == lower(name)) {
                order.push_back(i);
                used[i] = true;
            }
        }
    }
    for (std::size_t i = 0; i < report.datasets.size(); ++i) {
        if (!used[i]) order.push_back(i);
    }
    return order;
}

std::string report_to_json(const MetricsReport& report) {
    nlohmann::ordered_json j;
    j["datasets"] = nlohmann::ordered_json::array();
    for (const auto& d : report.datasets) {
        j["datasets"].push_back({{"name", d.name}, {"count", d.count}, {"dice", d.dice}, {"iou", d.iou}});
    }
    j["wavg"] = {{"dice", report.wavg_dice}, {"iou", report.wavg_iou}};
    j["threshold"] = report.threshold;
    return j.dump(2) + "\n";
}

MetricsReport report_from_json(const std::string& text) {
    try {
        const auto j = nlohmann::json::parse(text);
        MetricsReport r;
        for (const auto& d : j.at("datasets")) {
            r.datasets.push_back({d.at("name").get<std::string>(), d.at("count").get<std::size_t>(),
                                  d.at("dice").get<double>(), d.at("iou").get<double>()});
        }
        r.wavg_dice = j.at("wavg").at("dice").get<double>();
        r.wavg_iou = j.at("wavg").at("iou").get<double>();
        r.threshold = j.at("threshold").get<double>();
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::IoError, std::string("malformed report JSON: ") + e.what());
    }
}

namespace {

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(Errc::IoError, "cannot write '" + path.string() + "'");
    out << text;
    if (!out) throw Error(Errc::IoError, "write failed for '" + path.string() + "'");
}

void write_png(const fs::path& path, const cv::Mat& img) {
    if (!cv::imwrite(path.string(), img)) throw Error(Errc::IoError, "cannot write '" + path.string() + "'");
}

std::string fixed(double v, int digits) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

const cv::Scalar kInk(40, 40, 40);
const cv::Scalar kDiceColor(180, 110, 40);
const cv::Scalar kIouColor(60, 160, 230);

cv::Mat bar_chart(const MetricsReport& report, const std::vector<std::size_t>& order) {
    const int groups = static_cast<int>(order.size()) + 1;
    const int group_w = 90;
    const int left = 50, top = 30, plot_h = 240;
    const int width = left + groups * group_w + 20;
    cv::Mat img(top + plot_h + 60, width, CV_8UC3, cv::Scalar(255, 255, 255));
    for (int t = 0; t <= 4; ++t) {
        const int y = top + plot_h - t * plot_h / 4;
        cv::line(img, {left, y}, {width - 10, y}, cv::Scalar(220, 220, 220), 1);
        cv::putText(img, fixed(t * 0.25, 2), {5, y + 4}, cv::FONT_HERSHEY_SIMPLEX, 0.35, kInk, 1);
    }
    auto draw_group = [&](int g, const std::string& label, double dice, double iou_v) {
        const int x0 = left + g * group_w + 10;
        const int bw = 30;
        for (int k = 0; k < 2; ++k) {
            const double v = std::clamp(k == 0 ? dice : iou_v, 0.0, 1.0);
            const int hgt = static_cast<int>(std::lround(v * plot_h));
            cv::rectangle(img, cv::Rect(x0 + k * (bw + 4), top + plot_h - hgt, bw, std::max(hgt, 1)),
                          k == 0 ? kDiceColor : kIouColor, cv::FILLED);
        }
        cv::putText(img, label.substr(0, 11), {x0 - 4, top + plot_h + 18}, cv::FONT_HERSHEY_SIMPLEX, 0.38, kInk, 1);
    };
    int g = 0;
    for (auto i : order) {
        const auto& d = report.datasets[i];
        draw_group(g++, d.name, d.dice, d.iou);
    }
    draw_group(g, "wAVG", report.wavg_dice, report.wavg_iou);
    cv::rectangle(img, cv::Rect(left, top + plot_h + 32, 12, 12), kDiceColor, cv::FILLED);
    cv::putText(img, "Dice", {left + 16, top + plot_h + 43}, cv::FONT_HERSHEY_SIMPLEX, 0.4, kInk, 1);
    cv::rectangle(img, cv::Rect(left + 70, top + plot_h + 32, 12, 12), kIouColor, cv::FILLED);
    cv::putText(img, "IoU", {left + 86, top + plot_h + 43}, cv::FONT_HERSHEY_SIMPLEX, 0.4, kInk, 1);
    return img;
}

cv::Mat training_curve(const TrainHistory& history) {
    const int left = 60, top = 20, plot_w = 560, plot_h = 260;
    cv::Mat img(top + plot_h + 50, left + plot_w + 60, CV_8UC3, cv::Scalar(255, 255, 255));
    const auto& steps = history.steps;
    const double first = steps.front().step;
    const double last = std::max(first + 1.0, static_cast<double>(steps.back().step));
    // Running mean of l_total over a trailing window.
    const std::size_t window = std::max<std::size_t>(1, steps.size() / 50);
    std::vector<double> smooth(steps.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < steps.size(); ++i) {
        acc += steps[i].losses.l_total;
        if (i >= window) acc -= steps[i - window].losses.l_total;
        smooth[i] = acc / static_cast<double>(std::min(i + 1, window));
    }
    double ymax = 1e-9;
    for (double v : smooth) ymax = std::max(ymax, v);
    auto px = [&](double step) { return left + static_cast<int>((step - first) / (last - first) * plot_w); };
    auto py = [&](double v, double vmax) { return top + plot_h - static_cast<int>(std::clamp(v / vmax, 0.0, 1.0) * plot_h); };

    cv::rectangle(img, cv::Rect(left, top, plot_w, plot_h), cv::Scalar(200, 200, 200), 1);
    for (std::size_t i = 1; i < steps.size(); ++i) {
        cv::line(img, {px(steps[i - 1].step), py(smooth[i - 1], ymax)}, {px(steps[i].step), py(smooth[i], ymax)},
                 kDiceColor, 1, cv::LINE_AA);
    }
    cv::Point prev(-1, -1);
    for (const auto& rec : steps) {
        if (!rec.val_dice) continue;
        const cv::Point p(px(rec.step), py(*rec.val_dice, 1.0));
        cv::circle(img, p, 3, kIouColor, cv::FILLED);
        if (prev.x >= 0) cv::line(img, prev, p, kIouColor, 1, cv::LINE_AA);
        prev = p;
    }
    cv::putText(img, "loss (max " + fixed(ymax, 3) + ")", {left, top + plot_h + 20}, cv::FONT_HERSHEY_SIMPLEX, 0.4,
                kDiceColor, 1);
    cv::putText(img, "val Dice (0..1)", {left + 200, top + plot_h + 20}, cv::FONT_HERSHEY_SIMPLEX, 0.4, kIouColor, 1);
    cv::putText(img, "steps " + std::to_string(static_cast<long>(first)) + ".." + std::to_string(static_cast<long>(last)),
                {left + 380, top + plot_h + 20}, cv::FONT_HERSHEY_SIMPLEX, 0.4, kInk, 1);
    return img;
}

}  // namespace

void emit_report(const MetricsReport& report, const fs::path& out_dir, const TrainHistory* history) {
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw Error(Errc::IoError, "cannot create '" + out_dir.string() + "': " + ec.message());

    write_text(out_dir / "report.json", report_to_json(report));

    const auto order = report_row_order(report);
    std::string csv = "dataset,count,dice,iou\n";
    for (auto i : order) {
        const auto& d = report.datasets[i];
        csv += d.name + "," + std::to_string(d.count) + "," + fixed(d.dice, 6) + "," + fixed(d.iou, 6) + "\n";
    }
    std::size_t total = 0;
    for (const auto& d : report.datasets) total += d.count;
    csv += "wAVG," + std::to_string(total) + "," + fixed(report.wavg_dice, 6) + "," + fixed(report.wavg_iou, 6) + "\n";
    write_text(out_dir / "report.csv", csv);

    write_png(out_dir / "metrics_bar.png", bar_chart(report, order));
    if (history != nullptr && !history->steps.empty()) write_png(out_dir / "training_curve.png", training_curve(*history));
}

}  // namespace mixsup
