#include "mixsup/image_io.hpp"

#include <fstream>

#include <json.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "mixsup/error.hpp"

namespace mixsup::io {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

cv::Mat read_raw(const fs::path& path, int flags) {
    if (!fs::exists(path)) throw Error(Errc::IoError, "cannot open '" + path.string() + "'");
    cv::Mat mat = cv::imread(path.string(), flags);
    if (mat.empty()) throw Error(Errc::CorruptImage, "cannot decode '" + path.string() + "'");
    return mat;
}

void write_raw(const fs::path& path, const cv::Mat& mat) {
    bool ok = false;
    try {
        ok = cv::imwrite(path.string(), mat);
    } catch (const cv::Exception& e) {
        throw Error(Errc::IoError, "cannot write '" + path.string() + "': " + e.what());
    }
    if (!ok) throw Error(Errc::IoError, "cannot write '" + path.string() + "'");
}

json read_json(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(Errc::IoError, "cannot open '" + path.string() + "'");
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw Error(Errc::IoError, "malformed JSON in '" + path.string() + "': " + e.what());
    }
}

void write_json(const fs::path& path, const json& j) {
    std::ofstream out(path);
    if (!out) throw Error(Errc::IoError, "cannot write '" + path.string() + "'");
    out << j.dump() << '\n';
}

std::vector<PixelCoord> coords_from(const json& arr, const fs::path& path) {
    std::vector<PixelCoord> out;
    for (const auto& p : arr) {
        if (!p.is_array() || p.size() != 2) throw Error(Errc::IoError, "bad point entry in '" + path.string() + "'");
        out.push_back({p[0].get<int>(), p[1].get<int>()});
    }
    return out;
}

json coords_to(const std::vector<PixelCoord>& pts) {
    json arr = json::array();
    for (const auto& p : pts) arr.push_back({p.row, p.col});
    return arr;
}

}  // namespace

ImageTensor read_image(const fs::path& path) {
    const cv::Mat bgr = read_raw(path, cv::IMREAD_COLOR);
    ImageTensor img(bgr.rows, bgr.cols, 3);
    for (int r = 0; r < bgr.rows; ++r) {
        for (int c = 0; c < bgr.cols; ++c) {
            const auto px = bgr.at<cv::Vec3b>(r, c);
            for (int ch = 0; ch < 3; ++ch) img(r, c, ch) = static_cast<float>(px[2 - ch]) / 255.0f;
        }
    }
    return img;
}

void write_image(const fs::path& path, const ImageTensor& image) {
    cv::Mat bgr(image.height(), image.width(), CV_8UC3);
    for (int r = 0; r < image.height(); ++r) {
        for (int c = 0; c < image.width(); ++c) {
            cv::Vec3b px;
            for (int ch = 0; ch < 3; ++ch) {
                const float v = image(r, c, image.channels() == 3 ? ch : 0);
                px[2 - ch] = cv::saturate_cast<std::uint8_t>(v * 255.0f);
            }
            bgr.at<cv::Vec3b>(r, c) = px;
        }
    }
    write_raw(path, bgr);
}

DenseMask read_mask(const fs::path& path) {
    const cv::Mat gray = read_raw(path, cv::IMREAD_GRAYSCALE);
    DenseMask mask(gray.rows, gray.cols);
    for (int r = 0; r < gray.rows; ++r) {
        for (int c = 0; c < gray.cols; ++c) mask(r, c) = gray.at<std::uint8_t>(r, c) > 127 ? 1 : 0;
    }
    return mask;
}

void write_mask(const fs::path& path, const DenseMask& mask) {
    cv::Mat gray(mask.height(), mask.width(), CV_8UC1);
    for (int r = 0; r < mask.height(); ++r) {
        for (int c = 0; c < mask.width(); ++c) gray.at<std::uint8_t>(r, c) = mask(r, c) ? 255 : 0;
    }
    write_raw(path, gray);
}

ScribbleLabel read_scribble(const fs::path& path) {
    const cv::Mat gray = read_raw(path, cv::IMREAD_GRAYSCALE);
    ScribbleLabel s{Grid<ScribbleValue>(gray.rows, gray.cols)};
    for (int r = 0; r < gray.rows; ++r) {
        for (int c = 0; c < gray.cols; ++c) {
            const int v = gray.at<std::uint8_t>(r, c);
            s.grid(r, c) = v >= 192 ? ScribbleValue::Foreground
                         : v <= 64  ? ScribbleValue::Background
                                    : ScribbleValue::Unlabeled;
        }
    }
    return s;
}

void write_scribble(const fs::path& path, const ScribbleLabel& scribble) {
    cv::Mat gray(scribble.height(), scribble.width(), CV_8UC1);
    for (int r = 0; r < scribble.height(); ++r) {
        for (int c = 0; c < scribble.width(); ++c) {
            const auto v = scribble.grid(r, c);
            gray.at<std::uint8_t>(r, c) = v == ScribbleValue::Foreground ? 255 : v == ScribbleValue::Background ? 0 : 128;
        }
    }
    write_raw(path, gray);
}

BoxLabel read_box(const fs::path& path) {
    const json j = read_json(path);
    if (!j.contains("box") || !j["box"].is_array() || j["box"].size() != 4) {
        throw Error(Errc::IoError, "'" + path.string() + "' lacks a 4-element \"box\" array");
    }
    const auto& b = j["box"];
    return {b[0].get<int>(), b[1].get<int>(), b[2].get<int>(), b[3].get<int>()};
}

void write_box(const fs::path& path, const BoxLabel& box) {
    write_json(path, json{{"box", {box.row_min, box.col_min, box.row_max, box.col_max}}});
}

PointLabel read_points(const fs::path& path) {
    const json j = read_json(path);
    if (!j.contains("fg") || !j.contains("bg")) {
        throw Error(Errc::IoError, "'" + path.string() + "' lacks \"fg\"/\"bg\" arrays");
    }
    return {coords_from(j["fg"], path), coords_from(j["bg"], path)};
}

void write_points(const fs::path& path, const PointLabel& points) {
    write_json(path, json{{"fg", coords_to(points.fg_points)}, {"bg", coords_to(points.bg_points)}});
}

}  // namespace mixsup::io
