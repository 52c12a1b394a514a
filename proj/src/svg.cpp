#include "harfuse/svg.hpp"

#include <algorithm>
#include <cstdio>

namespace harfuse {

namespace {

std::string num(Scalar v, const char* format = "%.2f") {
    char buf[64];
    std::snprintf(buf, sizeof(buf), format, v);
    return buf;
}

std::string escape(const std::string& text) {
    std::string out;
    for (char c : text) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            default: out += c;
        }
    }
    return out;
}

struct Panel {
    Scalar x0, y0, w, h;  // drawing area in document coordinates
    Scalar y_max;         // data range is [0, y_max]
    Index n;              // points per series

    Scalar px(std::size_t i) const {
        return n < 2 ? x0 + w / 2
                     : x0 + w * static_cast<Scalar>(i) / static_cast<Scalar>(n - 1);
    }
    Scalar py(Scalar v) const { return y0 + h - h * (v / y_max); }
};

void polyline(std::string& svg, const Panel& p, const std::vector<Scalar>& ys,
              const char* color, const char* dash) {
    if (ys.empty()) return;
    svg += "  <polyline fill=\"none\" stroke=\"";
    svg += color;
    svg += "\" stroke-width=\"1.5\"";
    if (dash[0]) {
        svg += " stroke-dasharray=\"";
        svg += dash;
        svg += "\"";
    }
    svg += " points=\"";
    for (std::size_t i = 0; i < ys.size(); ++i) {
        if (i) svg += ' ';
        svg += num(p.px(i)) + "," + num(p.py(std::clamp(ys[i], 0.0, p.y_max)));
    }
    svg += "\"/>\n";
}

void frame(std::string& svg, const Panel& p, const std::string& label, const std::string& y_top) {
    svg += "  <rect x=\"" + num(p.x0) + "\" y=\"" + num(p.y0) + "\" width=\"" + num(p.w) +
           "\" height=\"" + num(p.h) + "\" fill=\"none\" stroke=\"#999\"/>\n";
    svg += "  <text x=\"" + num(p.x0 + p.w / 2) + "\" y=\"" + num(p.y0 - 8) +
           "\" text-anchor=\"middle\" font-size=\"13\">" + escape(label) + "</text>\n";
    svg += "  <text x=\"" + num(p.x0 - 6) + "\" y=\"" + num(p.y0 + 10) +
           "\" text-anchor=\"end\" font-size=\"10\">" + y_top + "</text>\n";
    svg += "  <text x=\"" + num(p.x0 - 6) + "\" y=\"" + num(p.y0 + p.h) +
           "\" text-anchor=\"end\" font-size=\"10\">0</text>\n";
}

}  // namespace

std::string history_svg(const TrainHistory& history, const std::string& title) {
    const Index n = static_cast<Index>(history.train_acc.size());
    Scalar loss_max = 1e-9;
    for (Scalar v : history.train_loss) loss_max = std::max(loss_max, v);
    for (Scalar v : history.val_loss) loss_max = std::max(loss_max, v);

    std::string svg =
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"900\" height=\"330\" "
        "font-family=\"sans-serif\">\n";
    svg += "  <text x=\"450\" y=\"22\" text-anchor=\"middle\" font-size=\"16\">" +
           escape(title) + "</text>\n";

    const Panel acc{60, 50, 350, 230, 1.0, n};
    const Panel loss{510, 50, 350, 230, loss_max, n};
    frame(svg, acc, "accuracy", "1");
    frame(svg, loss, "loss", num(loss_max, "%.3g"));
    polyline(svg, acc, history.train_acc, "#1f77b4", "");
    polyline(svg, acc, history.val_acc, "#d62728", "4,3");
    polyline(svg, loss, history.train_loss, "#1f77b4", "");
    polyline(svg, loss, history.val_loss, "#d62728", "4,3");

    svg += "  <text x=\"60\" y=\"310\" font-size=\"11\" fill=\"#1f77b4\">train</text>\n";
    svg += "  <text x=\"110\" y=\"310\" font-size=\"11\" fill=\"#d62728\">validation</text>\n";
    svg += "  <text x=\"840\" y=\"310\" font-size=\"11\" text-anchor=\"end\">epochs: " +
           std::to_string(n) + "</text>\n";
    svg += "</svg>\n";
    return svg;
}

std::string confusion_svg(const ConfusionMatrix& cm, const std::vector<std::string>& class_names,
                          const std::string& title) {
    const Index C = cm.n_classes;
    if (static_cast<Index>(class_names.size()) != C)
        throw ValidationError("confusion_svg: class name count does not match the matrix");

    const Scalar cell = 54, left = 110, top = 70;
    const Scalar width = left + cell * static_cast<Scalar>(C) + 30;
    const Scalar height = top + cell * static_cast<Scalar>(C) + 60;

    std::string svg = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(width, "%.0f") +
                      "\" height=\"" + num(height, "%.0f") + "\" font-family=\"sans-serif\">\n";
    svg += "  <text x=\"" + num(width / 2) + "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">" +
           escape(title) + "</text>\n";

    for (Index t = 0; t < C; ++t) {
        std::int64_t row_total = 0;
        for (Index p = 0; p < C; ++p) row_total += cm.at(t, p);
        for (Index p = 0; p < C; ++p) {
            const Scalar frac =
                row_total == 0 ? 0
                               : static_cast<Scalar>(cm.at(t, p)) / static_cast<Scalar>(row_total);
            const int shade = static_cast<int>(255 - 190 * frac);
            const Scalar x = left + cell * static_cast<Scalar>(p);
            const Scalar y = top + cell * static_cast<Scalar>(t);
            svg += "  <rect x=\"" + num(x) + "\" y=\"" + num(y) + "\" width=\"" + num(cell) +
                   "\" height=\"" + num(cell) + "\" fill=\"rgb(" + std::to_string(shade) + "," +
                   std::to_string(shade) + ",255)\" stroke=\"#ccc\"/>\n";
            svg += "  <text x=\"" + num(x + cell / 2) + "\" y=\"" + num(y + cell / 2 + 4) +
                   "\" text-anchor=\"middle\" font-size=\"11\"" +
                   (frac > 0.55 ? " fill=\"#fff\"" : "") + ">" + num(100 * frac, "%.1f") +
                   "</text>\n";
        }
    }

    for (Index i = 0; i < C; ++i) {
        const std::string name = escape(class_names[static_cast<std::size_t>(i)]);
        svg += "  <text x=\"" + num(left - 8) + "\" y=\"" +
               num(top + cell * static_cast<Scalar>(i) + cell / 2 + 4) +
               "\" text-anchor=\"end\" font-size=\"11\">" + name + "</text>\n";
        svg += "  <text x=\"" + num(left + cell * static_cast<Scalar>(i) + cell / 2) + "\" y=\"" +
               num(top + cell * static_cast<Scalar>(C) + 16) +
               "\" text-anchor=\"middle\" font-size=\"11\">" + name + "</text>\n";
    }
    svg += "  <text x=\"" + num(left - 90) + "\" y=\"" + num(top + cell * static_cast<Scalar>(C) / 2) +
           "\" font-size=\"12\" transform=\"rotate(-90 " + num(left - 90) + " " +
           num(top + cell * static_cast<Scalar>(C) / 2) + ")\" text-anchor=\"middle\">true</text>\n";
    svg += "  <text x=\"" + num(left + cell * static_cast<Scalar>(C) / 2) + "\" y=\"" +
           num(height - 12) + "\" text-anchor=\"middle\" font-size=\"12\">predicted</text>\n";
    svg += "</svg>\n";
    return svg;
}

}  // namespace harfuse
