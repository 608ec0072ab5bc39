// Minimal dependency-free canvas line chart for metric series in [0, 1].

export interface ChartSeries {
    label: string;
    color: string;
    x: number[];
    y: (number | null)[];
}

export function drawChart(canvas: HTMLCanvasElement, title: string,
                          series: ChartSeries[]): void {
    const ctx = canvas.getContext("2d");
    if (!ctx) return;
    const w = canvas.width;
    const h = canvas.height;
    const pad = { left: 34, right: 10, top: 22, bottom: 20 };
    ctx.clearRect(0, 0, w, h);

    ctx.fillStyle = "#ddd";
    ctx.font = "12px sans-serif";
    ctx.fillText(title, pad.left, 14);

    const xMax = Math.max(1, ...series.flatMap((s) => s.x));
    const plotW = w - pad.left - pad.right;
    const plotH = h - pad.top - pad.bottom;
    const px = (x: number) => pad.left + (x / xMax) * plotW;
    const py = (y: number) => pad.top + (1 - y) * plotH;

    ctx.strokeStyle = "#444";
    ctx.lineWidth = 1;
    for (const gy of [0, 0.5, 1]) {
        ctx.beginPath();
        ctx.moveTo(pad.left, py(gy));
        ctx.lineTo(w - pad.right, py(gy));
        ctx.stroke();
        ctx.fillText(gy.toFixed(1), 4, py(gy) + 4);
    }

    let legendX = pad.left + 60;
    for (const s of series) {
        ctx.strokeStyle = s.color;
        ctx.fillStyle = s.color;
        ctx.lineWidth = 2;
        ctx.beginPath();
        let started = false;
        s.x.forEach((x, i) => {
            const y = s.y[i];
            if (y === null || y === undefined) return;
            if (!started) {
                ctx.moveTo(px(x), py(y));
                started = true;
            } else {
                ctx.lineTo(px(x), py(y));
            }
        });
        ctx.stroke();
        s.x.forEach((x, i) => {
            const y = s.y[i];
            if (y === null || y === undefined) return;
            ctx.beginPath();
            ctx.arc(px(x), py(y), 2.5, 0, Math.PI * 2);
            ctx.fill();
        });
        ctx.fillText(s.label, legendX, 14);
        legendX += ctx.measureText(s.label).width + 16;
    }
}
