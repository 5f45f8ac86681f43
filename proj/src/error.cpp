#include "mixsup/error.hpp"

namespace mixsup {

std::string_view to_string(Errc code) {
    switch (code) {
        case Errc::EmptyMask: return "EmptyMask";
        case Errc::EmptyBackground: return "EmptyBackground";
        case Errc::OutOfBounds: return "OutOfBounds";
        case Errc::ShapeMismatch: return "ShapeMismatch";
        case Errc::NoLabeledPixels: return "NoLabeledPixels";
        case Errc::DegenerateContour: return "DegenerateContour";
        case Errc::BadSize: return "BadSize";
        case Errc::MissingAnnotation: return "MissingAnnotation";
        case Errc::CorruptImage: return "CorruptImage";
        case Errc::SizeMismatch: return "SizeMismatch";
        case Errc::EmptyDataset: return "EmptyDataset";
        case Errc::EmptyInput: return "EmptyInput";
        case Errc::NonFiniteLoss: return "NonFiniteLoss";
        case Errc::InvalidConfig: return "InvalidConfig";
        case Errc::IoError: return "IoError";
        case Errc::BadCheckpoint: return "BadCheckpoint";
    }
    return "Error";
}

}  // namespace mixsup
