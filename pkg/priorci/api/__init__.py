# priorci/api package
