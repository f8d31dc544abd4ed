export { fitLogLogSlope, SlopeFit } from "./fit";
export { renderConvergenceFigure } from "./figure";
export { metricRows, parseSweepCsv, SweepRow, SweepTable, TableError } from "./table";
