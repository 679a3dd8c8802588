# utils 模块初始化文件，用于标记为包
